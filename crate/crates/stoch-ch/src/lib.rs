//! Numerical laboratory for the stochastic Camassa-Holm (CH) equation with
//! transport noise, on a periodic domain.
//!
//! The equation, in momentum form, is the Stratonovich SPDE
//!
//!   dy + F(y) dt + D y o dw = 0,       D = xi d/dx + eta,
//!
//! where y = u - u_xx is the CH momentum, F(y) = A(y)y with
//! A(v) = a(v) d/dx + b(v), a(v) = (1 - d^2/dx^2)^{-1} v, b(v) = 2 a(v)_x,
//! and w is a scalar Wiener path. Because D generates an explicit
//! one-parameter group U_t (a weighted composition with the flow of xi), the
//! substitution z(t) = U_{w(t)} y(t) removes the stochastic integral and
//! leaves a random quasi-linear PDE z' = -A^(w(t), z) z whose operator has
//! transported coefficients. This crate implements both sides of that
//! equivalence so they can be cross-validated:
//!
//! | module      | contents                                                   |
//! |-------------|------------------------------------------------------------|
//! | [`grid`]    | periodic grid                                              |
//! | [`field`]   | spectral fields: derivatives, Helmholtz solve, H^s norms,  |
//! |             | dealiased products, trigonometric interpolation            |
//! | [`fio`]     | CSV / raw field serialization                              |
//! | [`noise`]   | the coefficient pair (xi, eta) and its expression presets  |
//! | [`flow`]    | characteristic flow, cocycle, group action U_t, generator  |
//! | [`ch`]      | deterministic CH: coefficients, right-hand side, stepper,  |
//! |             | conserved quantities                                       |
//! | [`transport`]| transported coefficients of the conjugated operator and   |
//! |             | the direct triple-conjugation cross-check                  |
//! | [`brownian`]| seeded Brownian paths with dyadic bridge refinement        |
//! | [`driver`]  | Doss-Sussman pipeline, direct Stratonovich schemes,        |
//! |             | stopping rule, ensembles                                   |
//!
//! All computations are deterministic given a seed: trajectories, CSV
//! diagnostics, and ensemble aggregates reproduce byte-identically.

pub mod brownian;
pub mod ch;
pub mod driver;
pub mod error;
pub mod field;
pub mod fio;
pub mod flow;
pub mod grid;
pub mod noise;
pub mod transport;

pub use error::{Error, Result};
pub use field::{Field, SobolevIndex, SpectralEvaluator};
pub use grid::Grid1D;
pub use noise::NoiseSpec;
