use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Equispaced periodic grid on [0, L): points x_i = i L/n, with x identified
/// modulo L. `n` is kept a power of two for the transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    length: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!("grid length must be positive, got {length}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Grid1D { length, n })
    }

    /// Period-2pi grid, the default for the worked examples.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(std::f64::consts::TAU, n)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.length / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Angular wavenumber of the signed mode index m: k_m = 2 pi m / L.
    pub fn wavenumber(&self, m: i64) -> f64 {
        std::f64::consts::TAU * m as f64 / self.length
    }

    /// Signed mode index for FFT bin `j` in 0..n (bins above n/2 are negative).
    pub fn signed_mode(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Largest mode retained by the 2/3 dealiasing rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    /// Wrap a coordinate into [0, L).
    pub fn reduce(&self, x: f64) -> f64 {
        let r = x.rem_euclid(self.length);
        // rem_euclid can return L itself when x is a tiny negative number
        if r >= self.length {
            r - self.length
        } else {
            r
        }
    }

    pub(crate) fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: format!("L = {}, n = {}", self.length, self.n),
                right: format!("L = {}, n = {}", other.length, other.n),
            })
        }
    }
}
