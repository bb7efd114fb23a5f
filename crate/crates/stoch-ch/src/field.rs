//! Real-valued periodic fields with a cached Fourier representation.
//!
//! Conventions. For samples f_j = f(x_j) on the grid x_j = j L/n, the stored
//! coefficients are
//!
//!   fhat_m = (1/n) sum_j f_j exp(-i k_m x_j),   k_m = 2 pi m / L,
//!
//! held in FFT bin order (bin j above n/2 is the negative mode j - n). With
//! this normalization mode amplitudes match the continuum Fourier series of a
//! band-limited function, the Helmholtz operator 1 - d^2/dx^2 is the diagonal
//! symbol 1 + k^2, and the H^s norm is (L sum_m (1+k_m^2)^s |fhat_m|^2)^{1/2},
//! whose s = 0 case reproduces the L^2 integral norm exactly for band-limited
//! data (trapezoid quadrature is exact there).
//!
//! Products are dealiased by the 2/3 rule: both factors are truncated to
//! |m| <= floor(n/3) before the pointwise product and the result is truncated
//! again, so quadratic nonlinearities never alias back into the retained band.

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(n)
        } else {
            p.plan_fft_inverse(n)
        }
    })
}

fn forward_transform(values: &[f64]) -> Vec<Complex<f64>> {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    plan(n, true).process(&mut buf);
    let scale = 1.0 / n as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

fn inverse_transform_real(spectrum: &[Complex<f64>]) -> Vec<f64> {
    let mut buf = spectrum.to_vec();
    plan(buf.len(), false).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Sobolev smoothness index, restricted to the range the solver uses:
/// coefficients live in H^3, solutions in H^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SobolevIndex(u8);

impl SobolevIndex {
    pub const L2: SobolevIndex = SobolevIndex(0);
    pub const H1: SobolevIndex = SobolevIndex(1);
    pub const H2: SobolevIndex = SobolevIndex(2);
    pub const H3: SobolevIndex = SobolevIndex(3);

    pub fn new(s: u8) -> Result<Self> {
        if s <= 3 {
            Ok(SobolevIndex(s))
        } else {
            Err(Error::invalid(format!("Sobolev index must be in 0..=3, got {s}")))
        }
    }

    pub fn order(self) -> u8 {
        self.0
    }
}

/// Point samples of a real periodic function, with the Fourier coefficients
/// computed on first use and cached. Immutable after construction; all
/// operations return new fields.
#[derive(Debug)]
pub struct Field {
    grid: Grid1D,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex<f64>>>,
}

impl Clone for Field {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Field { grid: self.grid, values: self.values.clone(), spectrum }
    }
}

impl Field {
    /// Build from samples, rejecting non-finite entries and length mismatches.
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::invalid(format!(
                "sample count {} does not match grid size {}",
                values.len(),
                grid.n()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "field samples".into(), t: 0.0 });
        }
        Ok(Field::raw(grid, values))
    }

    /// Sample a closure at the grid points. Panics on non-finite samples,
    /// which would indicate a broken closure rather than bad user data.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = (0..grid.n()).map(|i| f(grid.point(i))).collect();
        assert!(
            values.iter().all(|v| v.is_finite()),
            "from_fn closure produced non-finite samples"
        );
        Field::raw(grid, values)
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Field::raw(grid, vec![0.0; grid.n()])
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Field::raw(grid, vec![c; grid.n()])
    }

    pub(crate) fn raw(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Field { grid, values, spectrum: OnceLock::new() }
    }

    pub(crate) fn from_spectrum(grid: Grid1D, spectrum: Vec<Complex<f64>>) -> Self {
        debug_assert_eq!(spectrum.len(), grid.n());
        let values = inverse_transform_real(&spectrum);
        let cell = OnceLock::new();
        let _ = cell.set(spectrum);
        Field { grid, values, spectrum: cell }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Normalized Fourier coefficients in FFT bin order (see module docs).
    pub fn spectrum(&self) -> &[Complex<f64>] {
        self.spectrum.get_or_init(|| forward_transform(&self.values))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Spectral quadrature of the field over one period.
    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.length()
    }

    fn map_spectrum(&self, f: impl Fn(i64, f64) -> Complex<f64>) -> Field {
        let spec = self.spectrum();
        let mapped: Vec<Complex<f64>> = spec
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let m = self.grid.signed_mode(j);
                c * f(m, self.grid.wavenumber(m))
            })
            .collect();
        Field::from_spectrum(self.grid, mapped)
    }

    /// Spectral derivative of the given order (1..=3). Odd orders zero the
    /// Nyquist mode, whose grid samples carry no sign information for an odd
    /// symbol; even orders keep it (the symbol is real there).
    pub fn differentiate(&self, order: usize) -> Result<Field> {
        if !(1..=3).contains(&order) {
            return Err(Error::invalid(format!(
                "derivative order must be in 1..=3, got {order}"
            )));
        }
        let nyquist = (self.grid.n() / 2) as i64;
        Ok(self.map_spectrum(|m, k| {
            if order % 2 == 1 && (m == nyquist || m == -nyquist) {
                return Complex::new(0.0, 0.0);
            }
            let ik = Complex::new(0.0, k);
            ik.powu(order as u32)
        }))
    }

    /// (1 - d^2/dx^2) f, the Helmholtz operator relating velocity to momentum.
    pub fn helmholtz_apply(&self) -> Field {
        self.map_spectrum(|_, k| Complex::new(1.0 + k * k, 0.0))
    }

    /// (1 - d^2/dx^2)^{-1} f. The symbol 1 + k^2 never vanishes, so this is
    /// total, and smooths by two derivatives.
    pub fn helmholtz_inverse(&self) -> Field {
        self.map_spectrum(|_, k| Complex::new(1.0 / (1.0 + k * k), 0.0))
    }

    /// H^s norm via spectral weights: (L sum (1+k^2)^s |fhat|^2)^{1/2}.
    pub fn sobolev_norm(&self, s: SobolevIndex) -> f64 {
        let spec = self.spectrum();
        let mut acc = 0.0;
        for (j, c) in spec.iter().enumerate() {
            let k = self.grid.wavenumber(self.grid.signed_mode(j));
            let w = (1.0 + k * k).powi(s.order() as i32);
            acc += w * c.norm_sqr();
        }
        (acc * self.grid.length()).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(SobolevIndex::L2)
    }

    pub fn h2_norm(&self) -> f64 {
        self.sobolev_norm(SobolevIndex::H2)
    }

    fn tail_is_zero(&self, cutoff: usize) -> bool {
        let spec = self.spectrum();
        spec.iter().enumerate().all(|(j, c)| {
            let m = self.grid.signed_mode(j).unsigned_abs() as usize;
            m <= cutoff || c.norm_sqr() == 0.0
        })
    }

    /// Zero all modes with |m| > cutoff.
    pub fn truncate_modes(&self, cutoff: usize) -> Field {
        if self.tail_is_zero(cutoff) {
            return self.clone();
        }
        self.map_spectrum(|m, _| {
            if m.unsigned_abs() as usize > cutoff {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(1.0, 0.0)
            }
        })
    }

    /// Pointwise product with 2/3-rule dealiasing on both factors and on the
    /// result. Exact (to round-off) whenever the combined bandwidth of the
    /// factors stays inside the retained band.
    pub fn multiply(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let cutoff = self.grid.dealias_cutoff();
        let a = self.truncate_modes(cutoff);
        let b = other.truncate_modes(cutoff);
        let prod: Vec<f64> =
            a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
        Ok(Field::raw(self.grid, prod).truncate_modes(cutoff))
    }

    /// Trigonometric interpolation at arbitrary points (reduced modulo L).
    /// Exact for band-limited data up to accumulated round-off; positions
    /// landing on grid points return the stored samples.
    pub fn interpolate(&self, positions: &[f64]) -> Vec<f64> {
        let ev = SpectralEvaluator::new(self);
        let h = self.grid.spacing();
        positions
            .iter()
            .map(|&x| {
                let cell = x / h;
                let nearest = cell.round();
                if (cell - nearest).abs() <= 1e-9 {
                    let i = (nearest as i64).rem_euclid(self.grid.n() as i64) as usize;
                    self.values[i]
                } else {
                    ev.eval(x)
                }
            })
            .collect()
    }

    // Arithmetic helpers for the integrators. Grid agreement is a programming
    // invariant there, so these assert rather than return Result.

    fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "field arithmetic across different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Field::raw(self.grid, values)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    /// self + c * other, the basic Runge-Kutta update.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn scale(&self, c: f64) -> Field {
        Field::raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// Largest |f(x_j)| over the grid.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Evaluates a field's trigonometric interpolant at arbitrary points.
///
/// The spectrum is folded to real cosine/sine pairs once; each evaluation is
/// then one sin_cos plus an angle-addition recurrence over the occupied band,
/// so repeated evaluation (characteristic tracing) stays cheap for fields
/// with few active modes.
pub struct SpectralEvaluator {
    inv_length: f64,
    mean: f64,
    /// cos / sin weights for modes 1..=m_max: a[m-1] = 2 Re fhat_m,
    /// b[m-1] = -2 Im fhat_m.
    a: Vec<f64>,
    b: Vec<f64>,
    nyquist: f64,
    nyquist_mode: f64,
}

impl SpectralEvaluator {
    pub fn new(field: &Field) -> Self {
        let n = field.grid.n();
        let spec = field.spectrum();
        let peak = spec.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        // Differentiated fields carry FFT round-off amplified by the mode
        // number (~1e-17 k), which would defeat the trailing-mode trim and
        // make every evaluation pay for the full band. 1e-13 sits above that
        // noise floor while staying below any tolerance used on evaluations.
        let threshold = peak * 1e-13;
        let mut m_max = 0;
        for m in 1..n / 2 {
            if spec[m].norm() > threshold {
                m_max = m;
            }
        }
        let a = (1..=m_max).map(|m| 2.0 * spec[m].re).collect();
        let b = (1..=m_max).map(|m| -2.0 * spec[m].im).collect();
        let nyquist = if spec[n / 2].norm() > threshold { spec[n / 2].re } else { 0.0 };
        SpectralEvaluator {
            inv_length: 1.0 / field.grid.length(),
            mean: spec[0].re,
            a,
            b,
            nyquist,
            nyquist_mode: (n / 2) as f64,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let theta = TAU * x * self.inv_length;
        let (s1, c1) = theta.sin_cos();
        self.eval_at_angle(theta, s1, c1)
    }

    /// Fundamental angle for [`Self::eval_at_angle`]; identical for every
    /// evaluator built on the same grid.
    pub(crate) fn angle(&self, x: f64) -> f64 {
        TAU * x * self.inv_length
    }

    /// Evaluation with the fundamental angle and its sin/cos already in
    /// hand, so several evaluators on one grid share a single sin_cos per
    /// point (the characteristic tracer's inner loop).
    pub(crate) fn eval_at_angle(&self, theta: f64, s1: f64, c1: f64) -> f64 {
        let (mut c, mut s) = (c1, s1);
        let mut acc = self.mean;
        for (am, bm) in self.a.iter().zip(&self.b) {
            acc += am * c + bm * s;
            let cn = c * c1 - s * s1;
            let sn = s * c1 + c * s1;
            c = cn;
            s = sn;
        }
        if self.nyquist != 0.0 {
            acc += self.nyquist * (self.nyquist_mode * theta).cos();
        }
        acc
    }
}
