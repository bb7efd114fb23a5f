//! The one-parameter group generated by D = xi d/dx + eta.
//!
//! The flow phi_t solves dphi/dt = xi(phi), phi_0 = id. Solving
//! u_t = xi u_x + eta u by characteristics gives the explicit group
//!
//!   (U_t f)(x) = exp(c(t,x)) f(phi_t(x)),
//!   c(t,x) = integral_0^t eta(phi_s(x)) ds,
//!
//! whose generator is D: differentiating in t and using the 1D flow
//! identities xi(phi_t(x)) = xi(x) phi_t'(x) and
//! xi dc/dx = eta(phi_t) - eta recovers u_t = xi u_x + eta u pointwise.
//! Negative t gives the group inverse, since phi_{-t} inverts phi_t and the
//! cocycle integral flips sign along the reversed characteristic.
//!
//! Each grid point's characteristic is integrated by classic fixed-step RK4,
//! augmented with three companion quantities reused across the crate:
//!
//!   J_t  = dphi_t/dx            (variational equation J' = xi'(phi) J),
//!   c_t  = cocycle integral     (c' = eta(phi)),
//!   m_t  = int_0^t eta'(phi_s) J_s ds   (= d c_t/dx, the transported
//!                                          coefficient coupling).
//!
//! Off-grid values of xi, eta and their derivatives along characteristics
//! come from trigonometric interpolation, so the spatial accuracy of the
//! group action is spectral; positions are stored unreduced (winding kept)
//! and only wrapped inside interpolation.

use crate::error::{Error, Result};
use crate::field::{Field, SpectralEvaluator};
use crate::noise::NoiseSpec;
use std::collections::BTreeMap;
use std::sync::Arc;

/// The diffeomorphism phi_t sampled at the grid points, with its jacobian.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub t: f64,
    /// phi_t(x_i), unreduced so the winding number is retained.
    pub positions: Vec<f64>,
    /// dphi_t/dx at the grid points; strictly positive for a diffeomorphism.
    pub jacobian: Vec<f64>,
}

/// The accumulated zeroth-order exponent c(t, x) of the group action.
#[derive(Debug, Clone)]
pub struct CocycleField {
    pub t: f64,
    pub values: Field,
}

/// Full augmented characteristic data at one flow time.
#[derive(Debug, Clone)]
pub(crate) struct FlowData {
    pub positions: Vec<f64>,
    pub jacobian: Vec<f64>,
    pub cocycle: Vec<f64>,
    /// m_t(x_i) = int_0^t eta'(phi_s(x_i)) J_s(x_i) ds.
    pub eta_prime_moment: Vec<f64>,
}

/// Which zeroth-order weight accompanies the composition with phi_t. The
/// transported-coefficient formulas use the same flow with different weights:
/// the full cocycle for U^{xi,eta}, none for U^{xi,0}, and 1/J for
/// U^{xi,-xi'} (the exponent of -xi' along characteristics is -ln J).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Weighting {
    Cocycle,
    None,
    InverseJacobian,
}

/// Bundled evaluators for (xi, xi', eta, eta') sharing one fundamental
/// sin_cos per point, so a characteristic stage pays the trig once.
struct CoefficientBank {
    xi: SpectralEvaluator,
    xi_prime: SpectralEvaluator,
    eta: SpectralEvaluator,
    eta_prime: SpectralEvaluator,
}

impl CoefficientBank {
    fn new(noise: &NoiseSpec) -> Self {
        CoefficientBank {
            xi: SpectralEvaluator::new(noise.xi()),
            xi_prime: SpectralEvaluator::new(noise.xi_prime()),
            eta: SpectralEvaluator::new(noise.eta()),
            eta_prime: SpectralEvaluator::new(noise.eta_prime()),
        }
    }

    /// (xi, xi' j, eta, eta' j) at one point: the augmented slope vector.
    fn slopes(&self, x: f64, j: f64) -> [f64; 4] {
        let theta = self.xi.angle(x);
        let (s1, c1) = theta.sin_cos();
        [
            self.xi.eval_at_angle(theta, s1, c1),
            self.xi_prime.eval_at_angle(theta, s1, c1) * j,
            self.eta.eval_at_angle(theta, s1, c1),
            self.eta_prime.eval_at_angle(theta, s1, c1) * j,
        ]
    }
}

/// Substep count from the accuracy guard |t| max|xi| / substeps <= spacing/8,
/// floored at 16. Fourth-order in this substep size, which keeps the time
/// error of the characteristics at or below the spectral spatial error for
/// the flow times the solvers use.
pub fn default_substeps(noise: &NoiseSpec, t: f64) -> usize {
    let spacing = noise.grid().spacing();
    let guard = (8.0 * t.abs() * noise.xi_max_abs() / spacing).ceil();
    (guard as usize).max(16)
}

pub(crate) fn integrate_flow(noise: &NoiseSpec, t: f64, substeps: usize) -> Result<FlowData> {
    let grid = *noise.grid();
    let n = grid.n();
    if t == 0.0 {
        return Ok(FlowData {
            positions: grid.points(),
            jacobian: vec![1.0; n],
            cocycle: vec![0.0; n],
            eta_prime_moment: vec![0.0; n],
        });
    }
    if substeps == 0 {
        return Err(Error::invalid("flow integration needs at least one substep"));
    }
    let bank = CoefficientBank::new(noise);
    let h = t / substeps as f64;

    let mut chi = grid.points();
    let mut jac = vec![1.0; n];
    let mut coc = vec![0.0; n];
    let mut mom = vec![0.0; n];

    // Slopes for the augmented state (chi, J, c, m). The c and m components
    // never feed back into the right-hand side, so the classic scheme
    // doubles as their quadrature at full order.
    let derivs = |x: f64, j: f64| -> [f64; 4] { bank.slopes(x, j) };

    for _ in 0..substeps {
        for i in 0..n {
            let (x0, j0) = (chi[i], jac[i]);
            let k1 = derivs(x0, j0);
            let k2 = derivs(x0 + 0.5 * h * k1[0], j0 + 0.5 * h * k1[1]);
            let k3 = derivs(x0 + 0.5 * h * k2[0], j0 + 0.5 * h * k2[1]);
            let k4 = derivs(x0 + h * k3[0], j0 + h * k3[1]);
            let w = h / 6.0;
            chi[i] += w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            jac[i] += w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            coc[i] += w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
            mom[i] += w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]);
        }
    }

    let finite = chi.iter().chain(&jac).chain(&coc).chain(&mom).all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite { context: "characteristic integration".into(), t });
    }
    Ok(FlowData { positions: chi, jacobian: jac, cocycle: coc, eta_prime_moment: mom })
}

/// Integrate the characteristic flow of xi to time t (signed).
pub fn flow_map(noise: &NoiseSpec, t: f64, substeps: usize) -> Result<FlowMap> {
    let data = integrate_flow(noise, t, substeps)?;
    Ok(FlowMap { t, positions: data.positions, jacobian: data.jacobian })
}

/// The cocycle c(t, x) = int_0^t eta(phi_s(x)) ds on the grid.
pub fn cocycle(noise: &NoiseSpec, t: f64, substeps: usize) -> Result<CocycleField> {
    let data = integrate_flow(noise, t, substeps)?;
    Ok(CocycleField { t, values: Field::raw(*noise.grid(), data.cocycle) })
}

pub(crate) fn apply_flow_data(data: &FlowData, f: &Field, weighting: Weighting) -> Field {
    let interp = f.interpolate(&data.positions);
    let values: Vec<f64> = match weighting {
        Weighting::Cocycle => interp
            .iter()
            .zip(&data.cocycle)
            .map(|(&v, &c)| c.exp() * v)
            .collect(),
        Weighting::None => interp,
        Weighting::InverseJacobian => {
            interp.iter().zip(&data.jacobian).map(|(&v, &j)| v / j).collect()
        }
    };
    Field::raw(*f.grid(), values)
}

/// The group action U_t f = e^{c(t,.)} f(phi_t(.)), with substeps chosen by
/// the default accuracy rule. Negative t applies the group inverse.
pub fn group_apply(noise: &NoiseSpec, t: f64, f: &Field) -> Result<Field> {
    group_apply_with(noise, t, f, default_substeps(noise, t))
}

/// As [`group_apply`] with an explicit substep count (convergence studies).
pub fn group_apply_with(noise: &NoiseSpec, t: f64, f: &Field, substeps: usize) -> Result<Field> {
    noise.grid().check_same(f.grid())?;
    if t == 0.0 || noise.is_zero() {
        return Ok(f.clone());
    }
    let data = integrate_flow(noise, t, substeps)?;
    Ok(apply_flow_data(&data, f, Weighting::Cocycle))
}

pub(crate) fn group_apply_pair(
    noise: &NoiseSpec,
    t: f64,
    f: &Field,
    weighting: Weighting,
    substeps: usize,
) -> Result<Field> {
    noise.grid().check_same(f.grid())?;
    if t == 0.0 || noise.is_zero() {
        return Ok(f.clone());
    }
    let data = integrate_flow(noise, t, substeps)?;
    Ok(apply_flow_data(&data, f, weighting))
}

/// The generator D f = xi f' + eta f, with dealiased products.
pub fn generator_apply(noise: &NoiseSpec, f: &Field) -> Result<Field> {
    noise.grid().check_same(f.grid())?;
    let advect = noise.xi().multiply(&f.differentiate(1)?)?;
    let scale = noise.eta().multiply(f)?;
    Ok(advect.add(&scale))
}

/// Memoizes augmented flow integrations by flow time. One trajectory solve
/// hits the same stage times repeatedly (the RK4 midpoint twice per step,
/// step ends shared between steps), so exact-key reuse is already effective.
/// A nonzero quantum trades accuracy for more hits by snapping times to the
/// quantized lattice before integrating; leave it 0 for convergence studies.
pub(crate) struct FlowCache {
    quantum: f64,
    entries: BTreeMap<u64, Arc<FlowData>>,
    capacity: usize,
}

impl FlowCache {
    pub fn new(quantum: f64) -> Self {
        FlowCache { quantum, entries: BTreeMap::new(), capacity: 8192 }
    }

    fn key_time(&self, t: f64) -> f64 {
        if self.quantum > 0.0 {
            (t / self.quantum).round() * self.quantum
        } else {
            t
        }
    }

    pub fn get(&mut self, noise: &NoiseSpec, t: f64) -> Result<Arc<FlowData>> {
        let t = self.key_time(t);
        let key = t.to_bits();
        if let Some(data) = self.entries.get(&key) {
            return Ok(Arc::clone(data));
        }
        let data = Arc::new(integrate_flow(noise, t, default_substeps(noise, t))?);
        if self.entries.len() >= self.capacity {
            self.entries.clear();
        }
        self.entries.insert(key, Arc::clone(&data));
        Ok(data)
    }
}
