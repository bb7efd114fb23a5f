//! Driving scalar Brownian paths with bridge refinement.
//!
//! Paths are sampled on a uniform mesh and refined by conditional (bridge)
//! midpoints so that a refined path is a strong refinement of the coarse one:
//! all coarse knots are preserved bit for bit. Randomness is ChaCha20 keyed
//! by the seed, with the stream index reserved per refinement level; the
//! increments of level l never depend on how many refinements were taken, so
//! refine-then-refine commutes with sampling at the finer level directly
//! conditioned on the same coarse knots.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Scalar path with value lookup on [0, t_max]; trajectories only ever read
/// the driving noise through this trait.
pub trait NoisePath {
    /// Path value at time t; linear between knots for sampled paths.
    fn value(&self, t: f64) -> f64;
    fn t_max(&self) -> f64;
}

/// Piecewise-linear Brownian path on a uniform mesh.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    seed: u64,
    level: u32,
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Sample a Brownian path on the uniform mesh of spacing ~dt covering
/// [0, t_max]; the step count is round(t_max/dt), at least 1.
pub fn sample_brownian(seed: u64, t_max: f64, dt: f64) -> Result<BrownianPath> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid(format!("path horizon must be positive, got {t_max}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("path step must be positive, got {dt}")));
    }
    let n = ((t_max / dt).round() as usize).max(1);
    let h = t_max / n as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let sqrt_h = h.sqrt();
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    times.push(0.0);
    values.push(0.0);
    let mut w = 0.0;
    for i in 1..=n {
        let z: f64 = rng.sample(StandardNormal);
        w += sqrt_h * z;
        times.push(t_max * i as f64 / n as f64);
        values.push(w);
    }
    Ok(BrownianPath { seed, level: 0, times, values })
}

impl BrownianPath {
    /// Insert conditional midpoints into every mesh cell, halving the
    /// spacing. Existing knots are kept unchanged.
    pub fn refine(&self) -> BrownianPath {
        let n = self.times.len() - 1;
        let h = self.t_max() / n as f64;
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::from(self.level) + 1);
        let half_sqrt_h = h.sqrt() / 2.0;
        let mut times = Vec::with_capacity(2 * n + 1);
        let mut values = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            times.push(self.times[i]);
            values.push(self.values[i]);
            times.push(0.5 * (self.times[i] + self.times[i + 1]));
            values.push(0.5 * (self.values[i] + self.values[i + 1]) + half_sqrt_h * z);
        }
        times.push(self.times[n]);
        values.push(self.values[n]);
        BrownianPath { seed: self.seed, level: self.level + 1, times, values }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn spacing(&self) -> f64 {
        self.t_max() / (self.times.len() - 1) as f64
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.times, &self.values)
    }
}

impl NoisePath for BrownianPath {
    fn value(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.t_max());
        // partition_point: first index with times[i] > t, so i-1 is the cell.
        let hi = self.times.partition_point(|&s| s <= t);
        if hi == self.times.len() {
            return *self.values.last().unwrap();
        }
        let lo = hi - 1;
        if self.times[lo] == t {
            return self.values[lo];
        }
        let frac = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        self.values[lo] + frac * (self.values[hi] - self.values[lo])
    }

    fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Deterministic surrogate path given by a closure, for convergence studies
/// against smooth drivers and for the zero-noise cross-checks.
pub struct AnalyticPath<F: Fn(f64) -> f64> {
    f: F,
    t_max: f64,
}

impl<F: Fn(f64) -> f64> AnalyticPath<F> {
    pub fn new(f: F, t_max: f64) -> Self {
        AnalyticPath { f, t_max }
    }
}

impl<F: Fn(f64) -> f64> NoisePath for AnalyticPath<F> {
    fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn t_max(&self) -> f64 {
        self.t_max
    }
}
