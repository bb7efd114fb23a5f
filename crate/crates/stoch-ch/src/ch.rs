//! Deterministic Camassa-Holm machinery in momentum form.
//!
//! With y = u - u_xx = Q^2 u the CH equation becomes the quasi-linear
//! transport y_t + A(y) y = 0 where A(v) f = a(v) f' + b(v) f,
//! a(v) = Q^{-2} v (the velocity u) and b(v) = 2 (Q^{-2} v)_x (= 2 u_x).
//! Constants are steady states, and the first integrals
//! mass = int u dx and energy = int (u^2 + u_x^2) dx serve as drift
//! diagnostics for the time stepper.

use crate::error::Result;
use crate::field::Field;
use rustfft::num_complex::Complex;

/// Coefficients of the quasi-linear CH operator for a given momentum field:
/// `a` is the velocity u, `b` is 2 u_x.
#[derive(Debug, Clone)]
pub struct ChCoefficients {
    pub a: Field,
    pub b: Field,
}

/// Momentum density y = u - u_xx at a point in time.
#[derive(Debug, Clone)]
pub struct MomentumState {
    pub y: Field,
    pub time: f64,
}

impl MomentumState {
    pub fn new(y: Field, time: f64) -> Self {
        MomentumState { y, time }
    }

    /// Velocity u = Q^{-2} y.
    pub fn velocity(&self) -> Field {
        self.y.helmholtz_inverse()
    }
}

pub fn ch_coefficients(v: &Field) -> ChCoefficients {
    let a = v.helmholtz_inverse();
    let b = a.differentiate(1).expect("first derivative is always valid").scale(2.0);
    ChCoefficients { a, b }
}

/// Apply given first-order coefficients: a f' + b f, dealiased.
pub fn apply_coefficients(a: &Field, b: &Field, f: &Field) -> Result<Field> {
    let advect = a.multiply(&f.differentiate(1)?)?;
    let zero_order = b.multiply(f)?;
    Ok(advect.add(&zero_order))
}

/// The CH operator A(v) f = a(v) f' + b(v) f.
pub fn apply_a(v: &Field, f: &Field) -> Result<Field> {
    v.grid().check_same(f.grid())?;
    let coeffs = ch_coefficients(v);
    apply_coefficients(&coeffs.a, &coeffs.b, f)
}

/// F(y) = A(y) y = u y' + 2 u_x y, the right-hand side of y_t + F(y) = 0.
pub fn ch_rhs(y: &Field) -> Result<Field> {
    apply_a(y, y)
}

/// Mass and energy of the state carried by u = Q^{-2} y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conserved {
    /// int u dx (equal to int y dx on the torus).
    pub mass: f64,
    /// int (u^2 + u_x^2) dx, the H^1 energy of the velocity.
    pub energy: f64,
}

pub fn conserved_quantities(state: &MomentumState) -> Conserved {
    let u = state.velocity();
    let mass = u.integral();
    let h1 = u.sobolev_norm(crate::field::SobolevIndex::H1);
    Conserved { mass, energy: h1 * h1 }
}

/// Exponential low-pass on the top third of the dealiased band. For smooth
/// solutions the touched modes sit at round-off, so conservation is not
/// disturbed; near steepening the filter drains the spurious tail energy
/// that dealiasing alone leaves behind.
pub(crate) fn spectral_filter(f: &Field) -> Field {
    let grid = *f.grid();
    let cutoff = grid.dealias_cutoff();
    let start = 2 * cutoff / 3;
    let spec = f.spectrum();
    let filtered: Vec<Complex<f64>> = spec
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let m = grid.signed_mode(j).unsigned_abs() as usize;
            if m <= start {
                c
            } else {
                let r = (m - start) as f64 / (cutoff - start).max(1) as f64;
                c * (-36.0 * r.powi(8)).exp()
            }
        })
        .collect();
    Field::from_spectrum(grid, filtered)
}

/// One classic fourth-order step of y' = -F(y), followed by the spectral
/// filter. Errors out (keeping the caller's previous state intact) if the
/// step produces non-finite values.
pub fn deterministic_step(state: &MomentumState, dt: f64) -> Result<MomentumState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(crate::error::Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let y = &state.y;
    let k1 = ch_rhs(y)?.scale(-1.0);
    let k2 = ch_rhs(&y.add_scaled(0.5 * dt, &k1))?.scale(-1.0);
    let k3 = ch_rhs(&y.add_scaled(0.5 * dt, &k2))?.scale(-1.0);
    let k4 = ch_rhs(&y.add_scaled(dt, &k3))?.scale(-1.0);
    let mut next = y.clone();
    next = next.add_scaled(dt / 6.0, &k1);
    next = next.add_scaled(dt / 3.0, &k2);
    next = next.add_scaled(dt / 3.0, &k3);
    next = next.add_scaled(dt / 6.0, &k4);
    let next = spectral_filter(&next);
    if !next.all_finite() {
        return Err(crate::error::Error::NonFinite {
            context: "deterministic CH step".into(),
            t: state.time + dt,
        });
    }
    Ok(MomentumState { y: next, time: state.time + dt })
}
