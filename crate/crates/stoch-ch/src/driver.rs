//! Trajectory drivers for the stochastic equation
//! dy + F(y) dt + (xi y_x + eta y) o dw = 0.
//!
//! The primary pipeline removes the stochastic integral pathwise: with
//! z(t) = U_{w(t)} y(t) the equation becomes the random PDE
//! z' = -A^(w(t), z) z, marched here with the classical 4th-order scheme and
//! transformed back through y(t) = U_{-w(t)} z(t). Two direct Stratonovich
//! integrators (Heun predictor-corrector, Ito-corrected Euler) integrate y
//! without the substitution and serve as the independent cross-check.
//!
//! All marches share one stopping rule, checked at t = 0 and once per
//! accepted step: the first of horizon t >= T_max, transformed-state radius
//! ||z||_{H2} > R, path excursion |w(t)| >= T_w, or a non-finite state ends
//! the trajectory at theta. The direct integrators evaluate the radius on
//! U_{w(t)} y(t) so that the rule is the same event in both pipelines; those
//! per-step transforms amortize flow integrations over a cache keyed by w
//! quantized to 1e-4, which perturbs only the stop decision, never a stored
//! state.

use crate::brownian::{sample_brownian, NoisePath};
use crate::ch::{self, spectral_filter, MomentumState};
use crate::error::{Error, Result};
use crate::field::{Field, SobolevIndex};
use crate::flow::{self, FlowCache, Weighting};
use crate::noise::NoiseSpec;
use crate::transport;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Quantization grid (in w) for the stop-check transform cache.
const STOP_CACHE_QUANTUM: f64 = 1e-4;

/// Trajectory termination thresholds; all must be positive and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// H2 radius on the transformed state z.
    pub r: f64,
    /// Excursion bound on |w(t)|.
    pub t_w: f64,
    /// Time horizon.
    pub t_max: f64,
}

impl StopRule {
    pub fn new(r: f64, t_w: f64, t_max: f64) -> Result<Self> {
        for (name, v) in [("R", r), ("T_w", t_w), ("T_max", t_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "stop rule {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(StopRule { r, t_w, t_max })
    }

    /// R = 10 ||y0||_{H2}, T_w = 3, T_max = 1.
    pub fn default_for(y0: &Field) -> Result<Self> {
        StopRule::new(10.0 * y0.h2_norm(), 3.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Horizon,
    H2Radius,
    PathExcursion,
    NonFinite,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Horizon => "horizon",
            StopReason::H2Radius => "h2_radius",
            StopReason::PathExcursion => "path_excursion",
            StopReason::NonFinite => "nonfinite",
        }
    }

    pub const ALL: [StopReason; 4] = [
        StopReason::Horizon,
        StopReason::H2Radius,
        StopReason::PathExcursion,
        StopReason::NonFinite,
    ];
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Norms and invariants at one stored time. Rows from the z-only march leave
/// the physical columns NaN; the transform pass fills them.
#[derive(Debug, Clone, Copy)]
pub struct DiagRow {
    pub t: f64,
    pub w: f64,
    pub z_h0: f64,
    pub z_h1: f64,
    pub z_h2: f64,
    pub y_h0: f64,
    pub y_h1: f64,
    pub y_h2: f64,
    pub mass: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    /// Stored times: t = 0, every snapshot_stride-th accepted step, and theta.
    pub times: Vec<f64>,
    pub z_states: Vec<Field>,
    /// Physical momenta y = U_{-w(t)} z; empty for the z-only march.
    pub y_states: Vec<Field>,
    pub theta: f64,
    pub stop_reason: StopReason,
    pub diagnostics: Vec<DiagRow>,
}

impl TrajectoryResult {
    pub fn terminal_z(&self) -> &Field {
        self.z_states.last().expect("at least the initial state is stored")
    }

    pub fn terminal_y(&self) -> Option<&Field> {
        self.y_states.last()
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("t,w,z_h0,z_h1,z_h2,y_h0,y_h1,y_h2,mass,energy\n");
        for r in &self.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t, r.w, r.z_h0, r.z_h1, r.z_h2, r.y_h0, r.y_h1, r.y_h2, r.mass, r.energy
            );
        }
        out
    }
}

/// Drift selector: the full equation, or the pure-noise equation with the
/// Camassa-Holm term disabled (closed-form reference available).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    Full,
    NoiseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    HeunStratonovich,
    EulerItoCorrected,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rhs: RhsMode,
    /// Store every k-th accepted step (t = 0 and theta always stored).
    pub snapshot_stride: usize,
    /// Quantization for the dynamics flow cache; 0 keeps exact keys. Stage
    /// times repeat exactly within a step and across adjacent steps, so
    /// exact keys already dedupe; a positive quantum trades coefficient
    /// accuracy for more hits and is off by default.
    pub cache_quantum: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rhs: RhsMode::Full, snapshot_stride: 1, cache_quantum: 0.0 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.snapshot_stride == 0 {
            return Err(Error::invalid("snapshot stride must be at least 1"));
        }
        if !(self.cache_quantum >= 0.0 && self.cache_quantum.is_finite()) {
            return Err(Error::invalid(format!(
                "cache quantum must be finite and non-negative, got {}",
                self.cache_quantum
            )));
        }
        Ok(())
    }
}

/// First tripped condition, in precedence order for simultaneous trips.
fn check_stop(rule: &StopRule, t: f64, w_abs: f64, finite: bool, z_h2: f64) -> Option<StopReason> {
    if !finite {
        Some(StopReason::NonFinite)
    } else if z_h2 > rule.r {
        Some(StopReason::H2Radius)
    } else if w_abs >= rule.t_w {
        Some(StopReason::PathExcursion)
    } else if t >= rule.t_max {
        Some(StopReason::Horizon)
    } else {
        None
    }
}

fn validate_march(state0: &Field, path: &dyn NoisePath, noise: &NoiseSpec, rule: &StopRule, dt: f64, options: &SolverOptions) -> Result<()> {
    noise.grid().check_same(state0.grid())?;
    options.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if !state0.all_finite() {
        return Err(Error::invalid("initial state contains non-finite values"));
    }
    if path.t_max() < rule.t_max * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "path covers [0, {}] but the horizon is {}",
            path.t_max(),
            rule.t_max
        )));
    }
    Ok(())
}

fn z_diag(t: f64, w: f64, z: &Field) -> DiagRow {
    DiagRow {
        t,
        w,
        z_h0: z.sobolev_norm(SobolevIndex::L2),
        z_h1: z.sobolev_norm(SobolevIndex::H1),
        z_h2: z.sobolev_norm(SobolevIndex::H2),
        y_h0: f64::NAN,
        y_h1: f64::NAN,
        y_h2: f64::NAN,
        mass: f64::NAN,
        energy: f64::NAN,
    }
}

fn fill_physical(row: &mut DiagRow, y: &Field) {
    let conserved = ch::conserved_quantities(&MomentumState::new(y.clone(), row.t));
    row.y_h0 = y.sobolev_norm(SobolevIndex::L2);
    row.y_h1 = y.sobolev_norm(SobolevIndex::H1);
    row.y_h2 = y.sobolev_norm(SobolevIndex::H2);
    row.mass = conserved.mass;
    row.energy = conserved.energy;
}

/// March the random PDE z' = -A^(w(t), z) z from z(0) = z0 along the given
/// path. Returns the transformed-variable trajectory only; y_states is left
/// empty. A non-finite state ends the trajectory with reason
/// [`StopReason::NonFinite`] and the last valid state retained.
pub fn solve_random_pde(
    z0: &Field,
    path: &dyn NoisePath,
    noise: &NoiseSpec,
    rule: &StopRule,
    dt: f64,
    options: &SolverOptions,
) -> Result<TrajectoryResult> {
    let mut cache = FlowCache::new(options.cache_quantum);
    solve_random_pde_cached(z0, path, noise, rule, dt, options, &mut cache)
}

fn hat_rhs(
    noise: &NoiseSpec,
    tau: f64,
    z: &Field,
    options: &SolverOptions,
    cache: &mut FlowCache,
) -> Result<Field> {
    match options.rhs {
        RhsMode::NoiseOnly => Ok(Field::zeros(*z.grid())),
        RhsMode::Full => {
            let op = transport::assemble_hat_a_cached(noise, tau, z, cache)?;
            Ok(op.apply(z)?.scale(-1.0))
        }
    }
}

fn solve_random_pde_cached(
    z0: &Field,
    path: &dyn NoisePath,
    noise: &NoiseSpec,
    rule: &StopRule,
    dt: f64,
    options: &SolverOptions,
    cache: &mut FlowCache,
) -> Result<TrajectoryResult> {
    validate_march(z0, path, noise, rule, dt, options)?;

    let mut z = z0.clone();
    let mut t = 0.0_f64;
    let mut times = vec![0.0];
    let mut z_states = vec![z.clone()];
    let mut diagnostics = vec![z_diag(0.0, path.value(0.0), &z)];
    let mut step_index = 0usize;

    macro_rules! stage {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => break (t, StopReason::NonFinite),
                Err(e) => return Err(e),
            }
        };
    }

    let initial = check_stop(rule, 0.0, path.value(0.0).abs(), z.all_finite(), z.h2_norm());
    let (theta, stop_reason) = if let Some(reason) = initial {
        (0.0, reason)
    } else {
        loop {
            let remaining = rule.t_max - t;
            let last = remaining <= dt * (1.0 + 1e-9);
            let h = if last { remaining } else { dt };
            let t_next = if last { rule.t_max } else { t + dt };

            let k1 = stage!(hat_rhs(noise, path.value(t), &z, options, cache));
            let z2 = z.add_scaled(0.5 * h, &k1);
            let k2 = stage!(hat_rhs(noise, path.value(t + 0.5 * h), &z2, options, cache));
            let z3 = z.add_scaled(0.5 * h, &k2);
            let k3 = stage!(hat_rhs(noise, path.value(t + 0.5 * h), &z3, options, cache));
            let z4 = z.add_scaled(h, &k3);
            let k4 = stage!(hat_rhs(noise, path.value(t_next), &z4, options, cache));

            let z_next = spectral_filter(
                &z.add_scaled(h / 6.0, &k1)
                    .add_scaled(h / 3.0, &k2)
                    .add_scaled(h / 3.0, &k3)
                    .add_scaled(h / 6.0, &k4),
            );
            if !z_next.all_finite() {
                break (t, StopReason::NonFinite);
            }
            z = z_next;
            t = t_next;
            step_index += 1;

            let w = path.value(t);
            let stop = check_stop(rule, t, w.abs(), true, z.h2_norm());
            if stop.is_some() || step_index % options.snapshot_stride == 0 {
                times.push(t);
                z_states.push(z.clone());
                diagnostics.push(z_diag(t, w, &z));
            }
            if let Some(reason) = stop {
                break (t, reason);
            }
        }
    };

    Ok(TrajectoryResult { times, z_states, y_states: Vec::new(), theta, stop_reason, diagnostics })
}

/// Full pathwise pipeline: march the random PDE from z(0) = y0 and map every
/// stored state back through y(t) = U_{-w(t)} z(t).
pub fn doss_sussman_solve(
    y0: &Field,
    path: &dyn NoisePath,
    noise: &NoiseSpec,
    rule: &StopRule,
    dt: f64,
    options: &SolverOptions,
) -> Result<TrajectoryResult> {
    let mut cache = FlowCache::new(options.cache_quantum);
    let mut res = solve_random_pde_cached(y0, path, noise, rule, dt, options, &mut cache)?;
    let mut y_states = Vec::with_capacity(res.times.len());
    for (i, (&t, z)) in res.times.iter().zip(&res.z_states).enumerate() {
        let w = path.value(t);
        let y = if w == 0.0 || noise.is_zero() {
            z.clone()
        } else {
            let data = cache.get(noise, -w)?;
            flow::apply_flow_data(&data, z, Weighting::Cocycle)
        };
        fill_physical(&mut res.diagnostics[i], &y);
        y_states.push(y);
    }
    res.y_states = y_states;
    Ok(res)
}

/// Direct Stratonovich march of dy = -F(y) dt - Dy o dw without the pathwise
/// substitution; the independent cross-check of the transform pipeline.
///
/// Heun: predictor-corrector in both the dt and dw increments. Corrected
/// Euler discretizes the equivalent Ito equation
/// dy = [-F(y) + (1/2) D^2 y] dt - Dy dw.
pub fn direct_spde_solve(
    y0: &Field,
    path: &dyn NoisePath,
    noise: &NoiseSpec,
    rule: &StopRule,
    dt: f64,
    scheme: Scheme,
    options: &SolverOptions,
) -> Result<TrajectoryResult> {
    validate_march(y0, path, noise, rule, dt, options)?;

    let drift = |y: &Field| -> Result<Field> {
        match options.rhs {
            RhsMode::NoiseOnly => Ok(Field::zeros(*y.grid())),
            RhsMode::Full => Ok(ch::ch_rhs(y)?.scale(-1.0)),
        }
    };

    // Exact transforms for stored snapshots, quantized for per-step stop
    // checks (norm comparison only).
    let mut exact_cache = FlowCache::new(options.cache_quantum);
    let mut stop_cache = FlowCache::new(STOP_CACHE_QUANTUM);
    let transform = |cache: &mut FlowCache, w: f64, y: &Field| -> Result<Field> {
        if w == 0.0 || noise.is_zero() {
            Ok(y.clone())
        } else {
            let data = cache.get(noise, w)?;
            Ok(flow::apply_flow_data(&data, y, Weighting::Cocycle))
        }
    };

    let mut y = y0.clone();
    let mut t = 0.0_f64;
    let mut times = vec![0.0];
    let z0 = transform(&mut exact_cache, path.value(0.0), &y)?;
    let mut diagnostics = {
        let mut row = z_diag(0.0, path.value(0.0), &z0);
        fill_physical(&mut row, &y);
        vec![row]
    };
    let mut z_states = vec![z0];
    let mut y_states = vec![y.clone()];
    let mut step_index = 0usize;

    macro_rules! stage {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => break (t, StopReason::NonFinite),
                Err(e) => return Err(e),
            }
        };
    }

    let initial = check_stop(rule, 0.0, path.value(0.0).abs(), y.all_finite(), z_states[0].h2_norm());
    let (theta, stop_reason) = if let Some(reason) = initial {
        (0.0, reason)
    } else {
        loop {
            let remaining = rule.t_max - t;
            let last = remaining <= dt * (1.0 + 1e-9);
            let h = if last { remaining } else { dt };
            let t_next = if last { rule.t_max } else { t + dt };
            let dw = path.value(t_next) - path.value(t);

            let y_next = match scheme {
                Scheme::HeunStratonovich => {
                    let d0 = stage!(drift(&y));
                    let g0 = stage!(flow::generator_apply(noise, &y));
                    let pred = y.add_scaled(h, &d0).add_scaled(-dw, &g0);
                    let d1 = stage!(drift(&pred));
                    let g1 = stage!(flow::generator_apply(noise, &pred));
                    y.add_scaled(0.5 * h, &d0.add(&d1)).add_scaled(-0.5 * dw, &g0.add(&g1))
                }
                Scheme::EulerItoCorrected => {
                    let d0 = stage!(drift(&y));
                    let g = stage!(flow::generator_apply(noise, &y));
                    let gg = stage!(flow::generator_apply(noise, &g));
                    y.add_scaled(h, &d0).add_scaled(0.5 * h, &gg).add_scaled(-dw, &g)
                }
            };
            let y_next = spectral_filter(&y_next);
            if !y_next.all_finite() {
                break (t, StopReason::NonFinite);
            }
            y = y_next;
            t = t_next;
            step_index += 1;

            let w = path.value(t);
            let z_h2 = stage!(transform(&mut stop_cache, w, &y).map(|z| z.h2_norm()));
            let stop = check_stop(rule, t, w.abs(), true, z_h2);
            if stop.is_some() || step_index % options.snapshot_stride == 0 {
                let z = stage!(transform(&mut exact_cache, w, &y));
                let mut row = z_diag(t, w, &z);
                fill_physical(&mut row, &y);
                times.push(t);
                z_states.push(z);
                y_states.push(y.clone());
                diagnostics.push(row);
            }
            if let Some(reason) = stop {
                break (t, reason);
            }
        }
    };

    Ok(TrajectoryResult { times, z_states, y_states, theta, stop_reason, diagnostics })
}

/// One ensemble configuration: everything but the seed.
#[derive(Clone)]
pub struct EnsembleSpec {
    pub y0: Field,
    pub noise: NoiseSpec,
    pub dt: f64,
    pub rule: StopRule,
    /// None runs the transform pipeline; Some(scheme) the direct integrator.
    pub scheme: Option<Scheme>,
    pub options: SolverOptions,
    /// Worker thread cap; 0 lets the pool pick.
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct SeedSummary {
    pub seed: u64,
    pub theta: f64,
    pub stop_reason: StopReason,
    pub y_h0: f64,
    pub y_h1: f64,
    pub y_h2: f64,
    pub mass: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// Per-seed terminal summaries, in input seed order.
    pub summaries: Vec<SeedSummary>,
    /// Seeds whose trajectory errored, with the message; not fatal.
    pub failures: Vec<(u64, String)>,
    pub theta_mean: f64,
    pub theta_quantiles: Vec<(f64, f64)>,
    pub reason_counts: Vec<(StopReason, usize)>,
}

impl EnsembleResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,theta,stop_reason,y_h0,y_h1,y_h2,mass,energy\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.seed, s.theta, s.stop_reason, s.y_h0, s.y_h1, s.y_h2, s.mass, s.energy
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("stat,value\n");
        let _ = writeln!(out, "runs,{}", self.summaries.len());
        let _ = writeln!(out, "failures,{}", self.failures.len());
        let _ = writeln!(out, "theta_mean,{}", self.theta_mean);
        for (q, v) in &self.theta_quantiles {
            let _ = writeln!(out, "theta_q{},{}", (q * 100.0).round() as u32, v);
        }
        for (reason, count) in &self.reason_counts {
            let _ = writeln!(out, "count_{reason},{count}");
        }
        out
    }
}

/// Run one trajectory per seed (path sampled at the march step) and
/// aggregate stopping statistics. Individual seed failures are recorded in
/// the result, not returned as errors.
pub fn ensemble_run(spec: &EnsembleSpec, seeds: &[u64]) -> Result<EnsembleResult> {
    let mut seen = std::collections::BTreeSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(Error::invalid(format!("duplicate seed {s}")));
        }
    }
    if seeds.is_empty() {
        return Err(Error::invalid("ensemble needs at least one seed"));
    }

    let run_one = |&seed: &u64| -> (u64, std::result::Result<SeedSummary, String>) {
        let outcome = (|| -> Result<SeedSummary> {
            let path = sample_brownian(seed, spec.rule.t_max, spec.dt)?;
            let res = match spec.scheme {
                None => doss_sussman_solve(&spec.y0, &path, &spec.noise, &spec.rule, spec.dt, &spec.options)?,
                Some(scheme) => direct_spde_solve(&spec.y0, &path, &spec.noise, &spec.rule, spec.dt, scheme, &spec.options)?,
            };
            let last = res.diagnostics.last().expect("at least one diagnostics row");
            Ok(SeedSummary {
                seed,
                theta: res.theta,
                stop_reason: res.stop_reason,
                y_h0: last.y_h0,
                y_h1: last.y_h1,
                y_h2: last.y_h2,
                mass: last.mass,
                energy: last.energy,
            })
        })();
        (seed, outcome.map_err(|e| e.to_string()))
    };

    let outcomes: Vec<(u64, std::result::Result<SeedSummary, String>)> = if spec.threads == 1 {
        seeds.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(run_one).collect())
    };

    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(s) => summaries.push(s),
            Err(msg) => failures.push((seed, msg)),
        }
    }

    let mut thetas: Vec<f64> = summaries.iter().map(|s| s.theta).collect();
    thetas.sort_by(f64::total_cmp);
    let theta_mean = if thetas.is_empty() {
        f64::NAN
    } else {
        thetas.iter().sum::<f64>() / thetas.len() as f64
    };
    let theta_quantiles = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&q| {
            let v = if thetas.is_empty() {
                f64::NAN
            } else {
                thetas[((thetas.len() - 1) as f64 * q).round() as usize]
            };
            (q, v)
        })
        .collect();
    let reason_counts = StopReason::ALL
        .iter()
        .map(|&r| (r, summaries.iter().filter(|s| s.stop_reason == r).count()))
        .collect();

    Ok(EnsembleResult { summaries, failures, theta_mean, theta_quantiles, reason_counts })
}
