//! Command-line harness for the stochastic Camassa-Holm laboratory:
//! config parsing, run orchestration, and validation suites.

pub mod config;
pub mod runner;
pub mod validate;
