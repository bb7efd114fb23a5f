//! Brownian paths, the pathwise transform pipeline, the direct Stratonovich
//! integrators, stopping logic, and ensembles.
//!
//! Oracles: closed-form transport of the initial state when the drift is
//! switched off (the transformed variable is then constant in time), the
//! deterministic core when either the noise coefficients or the path
//! vanish, and a chain-rule ODE integrated independently for smooth paths.
//! Brownian increments are checked against their defining statistics.

use std::f64::consts::TAU;
use stoch_ch::brownian::{sample_brownian, AnalyticPath, NoisePath};
use stoch_ch::ch::{ch_rhs, deterministic_step, MomentumState};
use stoch_ch::driver::{
    direct_spde_solve, doss_sussman_solve, ensemble_run, solve_random_pde, EnsembleSpec, RhsMode,
    Scheme, SolverOptions, StopRule, StopReason,
};
use stoch_ch::flow;
use stoch_ch::{Field, Grid1D, NoiseSpec, SobolevIndex};

fn grid256() -> Grid1D {
    Grid1D::standard(256).unwrap()
}

fn bump(grid: Grid1D) -> Field {
    Field::from_fn(grid, |x| 1.0 + 0.5 * x.cos())
}

/// xi = c sin x with eta = 2 xi', the gradient-coupled pair.
fn holm_noise(grid: Grid1D, c: f64) -> NoiseSpec {
    NoiseSpec::holm(Field::from_fn(grid, |x| c * x.sin())).unwrap()
}

fn wide_rule(t_max: f64) -> StopRule {
    StopRule::new(1e6, 3.0, t_max).unwrap()
}

fn l2_diff(a: &Field, b: &Field) -> f64 {
    a.sub(b).sobolev_norm(SobolevIndex::L2)
}

#[test]
fn brownian_sampling_is_seeded_and_scaled() {
    let p = sample_brownian(7, 1.0, 1e-3).unwrap();
    let q = sample_brownian(7, 1.0, 1e-3).unwrap();
    let r = sample_brownian(8, 1.0, 1e-3).unwrap();
    let (times, values) = p.knots();
    assert_eq!(values, q.knots().1, "same seed, same path");
    assert_ne!(values, r.knots().1, "different seed, different path");
    assert_eq!(values[0], 0.0);
    assert_eq!(times[0], 0.0);
    assert_eq!(*times.last().unwrap(), 1.0);
    assert_eq!(values.len(), 1001);
    assert!((p.spacing() - 1e-3).abs() < 1e-15);

    // 10^4 increments of variance dt: the sample variance has relative
    // standard error sqrt(2/n) ~ 1.4%, so a 10% band is a 7-sigma test.
    let long = sample_brownian(7, 10.0, 1e-3).unwrap();
    let (_, v) = long.knots();
    let n = v.len() - 1;
    let increments: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = increments.iter().sum::<f64>() / n as f64;
    let var = increments.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 1.5e-3, "increment mean {mean}");
    assert!((var / 1e-3 - 1.0).abs() < 0.1, "increment variance ratio {}", var / 1e-3);

    assert!(sample_brownian(1, 0.0, 1e-3).is_err());
    assert!(sample_brownian(1, 1.0, 0.0).is_err());
    assert!(sample_brownian(1, f64::NAN, 1e-3).is_err());
}

#[test]
fn refinement_keeps_knots_and_draws_bridge_midpoints() {
    let parent = sample_brownian(9, 10.0, 1e-3).unwrap();
    let child = parent.refine();
    assert_eq!(child.level(), parent.level() + 1);
    assert!((child.spacing() - parent.spacing() / 2.0).abs() < 1e-18);

    let (pt, pv) = parent.knots();
    let (ct, cv) = child.knots();
    for i in 0..pv.len() {
        assert_eq!(cv[2 * i], pv[i], "parent knot {i} must survive bitwise");
        assert_eq!(ct[2 * i], pt[i]);
    }

    let grandchild = child.refine();
    let (_, gv) = grandchild.knots();
    for i in 0..pv.len() {
        assert_eq!(gv[4 * i], pv[i], "two refinements still interleave");
    }
    assert_eq!(child.refine().knots().1, grandchild.knots().1, "refinement is deterministic");

    // Midpoint displacement from the chord is N(0, dt/4) for a bridge.
    let dt = parent.spacing();
    let n = pv.len() - 1;
    let mut disp = Vec::with_capacity(n);
    for i in 0..n {
        disp.push(cv[2 * i + 1] - 0.5 * (pv[i] + pv[i + 1]));
    }
    let var = disp.iter().map(|d| d * d).sum::<f64>() / n as f64;
    assert!((var / (dt / 4.0) - 1.0).abs() < 0.1, "bridge variance ratio {}", var / (dt / 4.0));
}

#[test]
fn path_lookup_interpolates_and_clamps() {
    let p = sample_brownian(3, 1.0, 0.25).unwrap();
    let (times, values) = p.knots();
    for (i, &t) in times.iter().enumerate() {
        assert_eq!(p.value(t), values[i], "exact at knot {i}");
    }
    let mid = 0.5 * (times[1] + times[2]);
    let expected = 0.5 * (values[1] + values[2]);
    assert!((p.value(mid) - expected).abs() < 1e-15);
    assert_eq!(p.value(-5.0), values[0]);
    assert_eq!(p.value(7.0), *values.last().unwrap());
    assert_eq!(p.t_max(), 1.0);

    let a = AnalyticPath::new(|t: f64| (3.0 * t).sin(), 2.0);
    assert_eq!(a.t_max(), 2.0);
    assert_eq!(a.value(0.4), (3.0 * 0.4_f64).sin());
}

#[test]
fn stop_rule_validation_and_defaults() {
    assert!(StopRule::new(0.0, 1.0, 1.0).is_err());
    assert!(StopRule::new(f64::INFINITY, 1.0, 1.0).is_err());
    assert!(StopRule::new(1.0, -1.0, 1.0).is_err());
    assert!(StopRule::new(1.0, 1.0, f64::NAN).is_err());

    let y0 = bump(grid256());
    let rule = StopRule::default_for(&y0).unwrap();
    assert!((rule.r - 10.0 * y0.sobolev_norm(SobolevIndex::H2)).abs() < 1e-12);
    assert_eq!(rule.t_w, 3.0);
    assert_eq!(rule.t_max, 1.0);
    assert!(StopRule::default_for(&Field::zeros(grid256())).is_err(), "zero radius is degenerate");
}

#[test]
fn zero_momentum_is_invariant() {
    let grid = grid256();
    let noise = holm_noise(grid, 1.0);
    let path = sample_brownian(3, 0.5, 1e-2).unwrap();
    let rule = StopRule::new(1.0, 3.0, 0.5).unwrap();
    let res = doss_sussman_solve(
        &Field::zeros(grid),
        &path,
        &noise,
        &rule,
        1e-2,
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(res.stop_reason, StopReason::Horizon);
    assert_eq!(res.theta, 0.5);
    assert!(res.terminal_y().unwrap().max_abs() < 1e-13);
    for z in &res.z_states {
        assert!(z.max_abs() < 1e-13);
    }
}

#[test]
fn zero_noise_pipeline_is_bitwise_deterministic() {
    let grid = grid256();
    let noise = NoiseSpec::zero(grid);
    let y0 = bump(grid);
    // Dyadic step and horizon so the accumulated time stays exact and the
    // final clamped step equals dt bitwise.
    let dt = 1.0 / 512.0;
    let rule = wide_rule(0.25);
    let path = sample_brownian(5, 0.25, dt).unwrap();
    let res =
        doss_sussman_solve(&y0, &path, &noise, &rule, dt, &SolverOptions::default()).unwrap();

    let mut state = MomentumState::new(y0, 0.0);
    for _ in 0..128 {
        state = deterministic_step(&state, dt).unwrap();
    }
    assert_eq!(res.stop_reason, StopReason::Horizon);
    let diff = res.terminal_y().unwrap().sub(&state.y).max_abs();
    assert_eq!(diff, 0.0, "zero noise must reproduce the deterministic core exactly");
    for (y, z) in res.y_states.iter().zip(&res.z_states) {
        assert_eq!(y.sub(z).max_abs(), 0.0, "trivial transform leaves z untouched");
    }
}

#[test]
fn flat_path_matches_the_deterministic_core() {
    let grid = grid256();
    let noise = holm_noise(grid, 1.0);
    let y0 = bump(grid);
    let dt = 1.0 / 512.0;
    let path = AnalyticPath::new(|_| 0.0, 0.25);
    let res =
        doss_sussman_solve(&y0, &path, &noise, &wide_rule(0.25), dt, &SolverOptions::default())
            .unwrap();
    let mut state = MomentumState::new(y0, 0.0);
    for _ in 0..128 {
        state = deterministic_step(&state, dt).unwrap();
    }
    let diff = res.terminal_y().unwrap().sub(&state.y).max_abs();
    assert_eq!(diff, 0.0, "a frozen path never engages the group action");
}

#[test]
fn drift_free_solution_is_pure_transport() {
    let grid = grid256();
    let noise = holm_noise(grid, 1.0);
    let y0 = bump(grid);
    let rule = wide_rule(0.5);
    let options = SolverOptions {
        rhs: RhsMode::NoiseOnly,
        snapshot_stride: 50,
        ..SolverOptions::default()
    };
    let path = sample_brownian(11, 0.5, 1e-3).unwrap();

    let coarse = doss_sussman_solve(&y0, &path, &noise, &rule, 2.5e-2, &options).unwrap();
    let fine = doss_sussman_solve(&y0, &path, &noise, &rule, 1e-3, &options).unwrap();

    // The transformed variable never moves, so the terminal state is the
    // group action at -w(T) regardless of dt.
    let w_end = path.value(0.5);
    let exact = flow::group_apply(&noise, -w_end, &y0).unwrap();
    for res in [&coarse, &fine] {
        assert!(l2_diff(res.terminal_z(), &y0) < 1e-12, "z must stay put");
        assert!(l2_diff(res.terminal_y().unwrap(), &exact) < 1e-7);
    }
    assert!(
        l2_diff(coarse.terminal_y().unwrap(), fine.terminal_y().unwrap()) < 1e-10,
        "the pipeline owes nothing to the step size when the drift is off"
    );
}

#[test]
fn corrected_euler_converges_along_path_refinements() {
    let grid = grid256();
    let noise = holm_noise(grid, 1.0);
    let y0 = bump(grid);
    let horizon = 0.25;
    let rule = wide_rule(horizon);
    let options = SolverOptions { rhs: RhsMode::NoiseOnly, ..SolverOptions::default() };

    let mut path = sample_brownian(17, horizon, horizon / 16.0).unwrap();
    let mut errors = Vec::new();
    let mut ds_coarse = f64::NAN;
    for level in 0..4 {
        let dt = path.spacing();
        let exact = flow::group_apply(&noise, -path.value(horizon), &y0).unwrap();
        let direct =
            direct_spde_solve(&y0, &path, &noise, &rule, dt, Scheme::EulerItoCorrected, &options)
                .unwrap();
        errors.push(l2_diff(direct.terminal_y().unwrap(), &exact));
        if level == 0 {
            let ds = doss_sussman_solve(&y0, &path, &noise, &rule, dt, &options).unwrap();
            ds_coarse = l2_diff(ds.terminal_y().unwrap(), &exact);
        }
        path = path.refine();
    }
    println!("corrected Euler errors along refinements: {errors:?}; transform at coarsest: {ds_coarse:.3e}");
    // Strong convergence on a fixed refined path: three halvings at order
    // >= 0.4 must shrink the error by at least 2^1.2.
    assert!(
        errors[3] < errors[0] * 2.0_f64.powf(-1.2),
        "insufficient decay: {errors:?}"
    );
    assert!(ds_coarse < 1e-7, "the transform pipeline is exact here, the direct march is not");
    assert!(errors[0] > 100.0 * ds_coarse, "the two pipelines must not share their error floor");
}

#[test]
fn smooth_path_pipeline_matches_chain_rule_ode() {
    let grid = grid256();
    let noise = holm_noise(grid, 1.0);
    let y0 = bump(grid);
    let horizon = 0.5;
    let path = AnalyticPath::new(|t: f64| 0.3 * (5.0 * t).sin(), horizon);
    let w_dot = |t: f64| 1.5 * (5.0 * t).cos();

    // Independent oracle: for differentiable w the solution solves
    // y' = -F(y) - w'(t) D y; integrate it by a non-autonomous RK4.
    let oracle = {
        let rhs = |t: f64, y: &Field| -> Field {
            ch_rhs(y)
                .unwrap()
                .scale(-1.0)
                .add_scaled(-w_dot(t), &flow::generator_apply(&noise, y).unwrap())
        };
        let dt = 2.5e-4;
        let steps = (horizon / dt).round() as usize;
        let mut y = y0.clone();
        let mut t = 0.0;
        for _ in 0..steps {
            let k1 = rhs(t, &y);
            let k2 = rhs(t + 0.5 * dt, &y.add_scaled(0.5 * dt, &k1));
            let k3 = rhs(t + 0.5 * dt, &y.add_scaled(0.5 * dt, &k2));
            let k4 = rhs(t + dt, &y.add_scaled(dt, &k3));
            y = y
                .add_scaled(dt / 6.0, &k1)
                .add_scaled(dt / 3.0, &k2)
                .add_scaled(dt / 3.0, &k3)
                .add_scaled(dt / 6.0, &k4);
            t += dt;
        }
        y
    };

    let errors: Vec<f64> = [4e-2, 2e-2, 1e-2]
        .iter()
        .map(|&dt| {
            let res =
                doss_sussman_solve(&y0, &path, &noise, &wide_rule(horizon), dt, &SolverOptions::default())
                    .unwrap();
            l2_diff(res.terminal_y().unwrap(), &oracle)
        })
        .collect();
    let combined_order = (errors[0] / errors[2]).log2() / 2.0;
    println!("smooth-path errors {errors:?}, combined order {combined_order:.2}");
    assert!(combined_order > 3.0, "errors {errors:?}");
    assert!(errors[2] < 1e-5);
}

#[test]
fn direct_schemes_recover_their_deterministic_orders() {
    let grid = grid256();
    let noise = NoiseSpec::zero(grid);
    let y0 = bump(grid);
    let horizon = 0.2;
    let rule = wide_rule(horizon);
    let path = sample_brownian(1, horizon, 1e-3).unwrap();

    let reference = {
        let mut state = MomentumState::new(y0.clone(), 0.0);
        let dt = 2.5e-5;
        for _ in 0..(horizon / dt).round() as usize {
            state = deterministic_step(&state, dt).unwrap();
        }
        state.y
    };

    let run = |scheme: Scheme, dt: f64| -> f64 {
        let res = direct_spde_solve(&y0, &path, &noise, &rule, dt, scheme, &SolverOptions::default())
            .unwrap();
        l2_diff(res.terminal_y().unwrap(), &reference)
    };

    let dts = [4e-3, 2e-3, 1e-3];
    let heun: Vec<f64> = dts.iter().map(|&dt| run(Scheme::HeunStratonovich, dt)).collect();
    let euler: Vec<f64> = dts.iter().map(|&dt| run(Scheme::EulerItoCorrected, dt)).collect();
    for pair in heun.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!((1.7..2.4).contains(&order), "Heun order {order} ({heun:?})");
    }
    for pair in euler.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!((0.8..1.25).contains(&order), "Euler order {order} ({euler:?})");
    }
}

#[test]
fn transform_and_direct_pipelines_approach_each_other() {
    let grid = grid256();
    let noise = holm_noise(grid, 0.1);
    let y0 = bump(grid);
    let horizon = 0.2;
    let rule = wide_rule(horizon);
    let options = SolverOptions::default();

    let mut path = sample_brownian(23, horizon, horizon / 8.0).unwrap();
    let mut gaps = Vec::new();
    for _ in 0..4 {
        let dt = path.spacing();
        let ds = doss_sussman_solve(&y0, &path, &noise, &rule, dt, &options).unwrap();
        let direct =
            direct_spde_solve(&y0, &path, &noise, &rule, dt, Scheme::HeunStratonovich, &options)
                .unwrap();
        gaps.push(l2_diff(ds.terminal_y().unwrap(), direct.terminal_y().unwrap()));
        path = path.refine();
    }
    println!("pipeline gap along refinements: {gaps:?}");
    for pair in gaps.windows(2) {
        assert!(pair[1] <= 1.1 * pair[0], "gap must not grow: {gaps:?}");
    }
    assert!(gaps[3] < 0.5 * gaps[0], "gap must shrink overall: {gaps:?}");
}

#[test]
fn marches_only_read_the_past_of_the_path() {
    let grid = grid256();
    let noise = holm_noise(grid, 0.1);
    let y0 = bump(grid);
    let rule = wide_rule(0.2);
    // Same seed, same spacing: the first half of the long path is bitwise
    // the short path, while its future differs from anything the short run
    // ever saw.
    let short = sample_brownian(31, 0.2, 1e-2).unwrap();
    let long = sample_brownian(31, 0.4, 1e-2).unwrap();
    assert_eq!(&long.knots().1[..21], short.knots().1, "prefix increments agree");

    for scheme in [None, Some(Scheme::HeunStratonovich)] {
        let run = |path: &dyn NoisePath| match scheme {
            None => doss_sussman_solve(&y0, path, &noise, &rule, 1e-2, &SolverOptions::default()),
            Some(s) => {
                direct_spde_solve(&y0, path, &noise, &rule, 1e-2, s, &SolverOptions::default())
            }
        };
        let a = run(&short).unwrap();
        let b = run(&long).unwrap();
        assert_eq!(a.times, b.times);
        let diff = a.terminal_y().unwrap().sub(b.terminal_y().unwrap()).max_abs();
        assert_eq!(diff, 0.0, "future path values leaked into the march");
    }
}

#[test]
fn stopping_reasons_cover_all_exits() {
    let grid = grid256();
    let y0 = bump(grid);
    let zero = NoiseSpec::zero(grid);

    // Radius below the initial norm: stopped before the first step.
    let tight = StopRule::new(0.5, 3.0, 1.0).unwrap();
    let path = sample_brownian(1, 1.0, 1e-2).unwrap();
    let res =
        doss_sussman_solve(&y0, &path, &zero, &tight, 1e-2, &SolverOptions::default()).unwrap();
    assert_eq!(res.stop_reason, StopReason::H2Radius);
    assert_eq!(res.theta, 0.0);
    assert_eq!(res.times, vec![0.0]);

    // Deterministic ramp |w| = t crosses the excursion bound at 0.4.
    let ramp = AnalyticPath::new(|t: f64| t, 2.0);
    let rule = StopRule::new(1e6, 0.35, 1.5).unwrap();
    let res = doss_sussman_solve(&y0, &ramp, &zero, &rule, 1e-1, &SolverOptions::default()).unwrap();
    assert_eq!(res.stop_reason, StopReason::PathExcursion);
    assert!((res.theta - 0.4).abs() < 1e-12);
    assert_eq!(res.theta, *res.times.last().unwrap());

    // Nothing trips: the horizon is reached exactly.
    let res = doss_sussman_solve(&y0, &path, &zero, &wide_rule(0.3), 5e-2, &SolverOptions::default())
        .unwrap();
    assert_eq!(res.stop_reason, StopReason::Horizon);
    assert_eq!(res.theta, 0.3);

    // A violently under-resolved step blows up; the march reports it and
    // keeps the last finite state instead of erroring out. The radius must
    // sit above the largest finite snapshot so overflow outruns it.
    let steep = Field::from_fn(grid, |x| 40.0 * x.sin());
    let roomy = StopRule::new(1e300, 3.0, 1.0).unwrap();
    let res = solve_random_pde(&steep, &path, &zero, &roomy, 5e-2, &SolverOptions::default())
        .unwrap();
    assert_eq!(res.stop_reason, StopReason::NonFinite);
    assert!(res.theta < 1.0);
    assert!(res.terminal_z().all_finite());
    for z in &res.z_states {
        assert!(z.all_finite(), "stored states must all be finite");
    }

    // A path shorter than the horizon is a configuration error, not a stop.
    let stub = sample_brownian(1, 0.1, 1e-2).unwrap();
    assert!(doss_sussman_solve(&y0, &stub, &zero, &wide_rule(1.0), 1e-2, &SolverOptions::default())
        .is_err());
}

#[test]
fn stopping_time_is_monotone_in_the_rule() {
    let grid = Grid1D::standard(128).unwrap();
    let noise = holm_noise(grid, 0.3);
    let y0 = bump(grid);
    let dt = 2e-2;
    let path = sample_brownian(41, 1.0, dt).unwrap();

    let radii = [3.4, 4.0, 1e4];
    let excursions = [0.25, 0.6, 5.0];
    let mut theta = [[0.0_f64; 3]; 3];
    for (i, &r) in radii.iter().enumerate() {
        for (j, &tw) in excursions.iter().enumerate() {
            let rule = StopRule::new(r, tw, 1.0).unwrap();
            let res =
                doss_sussman_solve(&y0, &path, &noise, &rule, dt, &SolverOptions::default()).unwrap();
            theta[i][j] = res.theta;
        }
    }
    println!("theta grid over (radius x excursion): {theta:?}");
    for i in 0..3 {
        for j in 0..3 {
            if i + 1 < 3 {
                assert!(theta[i][j] <= theta[i + 1][j] + 1e-12, "larger radius stops later");
            }
            if j + 1 < 3 {
                assert!(theta[i][j] <= theta[i][j + 1] + 1e-12, "larger excursion stops later");
            }
        }
    }
    let middle: Vec<f64> = theta.iter().flatten().cloned().collect();
    assert!(
        middle.iter().any(|&t| t < 1.0) && middle.contains(&1.0),
        "the grid should mix early stops and full runs: {middle:?}"
    );
}

#[test]
fn ensemble_with_zero_noise_collapses_to_one_trajectory() {
    let grid = grid256();
    let spec = EnsembleSpec {
        y0: bump(grid),
        noise: NoiseSpec::zero(grid),
        dt: 1e-2,
        rule: wide_rule(0.3),
        scheme: None,
        options: SolverOptions::default(),
        threads: 2,
    };
    let result = ensemble_run(&spec, &[1, 2, 3]).unwrap();
    assert!(result.failures.is_empty());
    assert_eq!(result.summaries.len(), 3);
    let first = &result.summaries[0];
    for s in &result.summaries {
        assert_eq!(s.theta, 0.3);
        assert_eq!(s.stop_reason, StopReason::Horizon);
        assert_eq!(s.y_h2, first.y_h2, "identical dynamics for every seed");
        assert_eq!(s.mass, first.mass);
    }
    assert!((result.theta_mean - 0.3).abs() < 1e-15);
    assert_eq!(
        result.reason_counts,
        vec![
            (StopReason::Horizon, 3),
            (StopReason::H2Radius, 0),
            (StopReason::PathExcursion, 0),
            (StopReason::NonFinite, 0),
        ]
    );
    for (_, v) in &result.theta_quantiles {
        assert_eq!(*v, 0.3);
    }
}

#[test]
fn ensemble_results_are_reproducible_and_thread_invariant() {
    let grid = grid256();
    let base = EnsembleSpec {
        y0: bump(grid),
        noise: holm_noise(grid, 0.2),
        dt: 1e-2,
        rule: wide_rule(0.3),
        scheme: Some(Scheme::HeunStratonovich),
        options: SolverOptions::default(),
        threads: 3,
    };
    let seeds = [5u64, 1, 9];
    let a = ensemble_run(&base, &seeds).unwrap();
    let b = ensemble_run(&base, &seeds).unwrap();
    let sequential = EnsembleSpec { threads: 1, ..base.clone() };
    let c = ensemble_run(&sequential, &seeds).unwrap();

    assert_eq!(a.to_csv(), b.to_csv(), "rerun in-process must be identical");
    assert_eq!(a.to_csv(), c.to_csv(), "thread count must not change results");
    assert_eq!(a.summary_csv(), c.summary_csv());
    let order: Vec<u64> = a.summaries.iter().map(|s| s.seed).collect();
    assert_eq!(order, seeds.to_vec(), "summaries keep input order");
    assert!(a.to_csv().starts_with("seed,theta,stop_reason,y_h0,y_h1,y_h2,mass,energy\n"));
    assert!(a.summary_csv().starts_with("stat,value\n"));
}

#[test]
fn ensemble_rejects_degenerate_seed_lists() {
    let grid = grid256();
    let spec = EnsembleSpec {
        y0: bump(grid),
        noise: NoiseSpec::zero(grid),
        dt: 1e-2,
        rule: wide_rule(0.1),
        scheme: None,
        options: SolverOptions::default(),
        threads: 1,
    };
    assert!(ensemble_run(&spec, &[]).is_err());
    assert!(ensemble_run(&spec, &[4, 7, 4]).is_err());
}

#[test]
fn ensemble_accounting_is_closed() {
    let grid = Grid1D::standard(128).unwrap();
    let spec = EnsembleSpec {
        y0: bump(grid),
        noise: holm_noise(grid, 0.3),
        dt: 2e-2,
        rule: StopRule::new(3.6, 0.8, 1.0).unwrap(),
        scheme: None,
        options: SolverOptions::default(),
        threads: 2,
    };
    let seeds: Vec<u64> = (1..=8).collect();
    let result = ensemble_run(&spec, &seeds).unwrap();
    assert!(result.failures.is_empty());
    let counted: usize = result.reason_counts.iter().map(|(_, c)| c).sum();
    assert_eq!(counted, result.summaries.len());
    let mean = result.summaries.iter().map(|s| s.theta).sum::<f64>() / 8.0;
    assert!((result.theta_mean - mean).abs() < 1e-12);
    let qs: Vec<f64> = result.theta_quantiles.iter().map(|&(q, _)| q).collect();
    assert_eq!(qs, vec![0.1, 0.25, 0.5, 0.75, 0.9]);
    for pair in result.theta_quantiles.windows(2) {
        assert!(pair[0].1 <= pair[1].1 + 1e-15, "quantiles must be ordered");
    }
    let reasons: Vec<StopReason> = result.summaries.iter().map(|s| s.stop_reason).collect();
    println!("ensemble stop reasons: {reasons:?}");
}

#[test]
fn snapshot_stride_thins_storage_but_not_dynamics() {
    let grid = grid256();
    let noise = holm_noise(grid, 0.5);
    let y0 = bump(grid);
    let rule = wide_rule(0.2);
    let path = sample_brownian(13, 0.2, 1e-2).unwrap();

    let dense =
        doss_sussman_solve(&y0, &path, &noise, &rule, 1e-2, &SolverOptions::default()).unwrap();
    let thin_options = SolverOptions { snapshot_stride: 5, ..SolverOptions::default() };
    let thin = doss_sussman_solve(&y0, &path, &noise, &rule, 1e-2, &thin_options).unwrap();

    assert_eq!(dense.times.len(), 21);
    assert_eq!(thin.times.len(), 5, "t = 0 plus every fifth step");
    assert_eq!(thin.theta, dense.theta);
    let diff = thin.terminal_y().unwrap().sub(dense.terminal_y().unwrap()).max_abs();
    assert_eq!(diff, 0.0, "stride only changes what is stored");
    assert!(thin.diagnostics.iter().all(|row| row.t == 0.0 || row.t > 0.04));

    let bad = SolverOptions { snapshot_stride: 0, ..SolverOptions::default() };
    assert!(doss_sussman_solve(&y0, &path, &noise, &rule, 1e-2, &bad).is_err());
}

#[test]
fn diagnostics_rows_expose_both_variables() {
    let grid = grid256();
    let noise = holm_noise(grid, 0.4);
    let y0 = bump(grid);
    let path = sample_brownian(19, 0.1, 1e-2).unwrap();
    let res =
        doss_sussman_solve(&y0, &path, &noise, &wide_rule(0.1), 1e-2, &SolverOptions::default())
            .unwrap();

    let csv = res.diagnostics_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,w,z_h0,z_h1,z_h2,y_h0,y_h1,y_h2,mass,energy"));
    assert_eq!(lines.count(), res.times.len());
    for (row, &t) in res.diagnostics.iter().zip(&res.times) {
        assert_eq!(row.t, t);
        assert!((row.w - path.value(t)).abs() < 1e-15);
        assert!(row.z_h2 > 0.0 && row.y_h2 > 0.0);
        assert!(row.energy > 0.0);
    }
    // z and y coincide at t = 0 where the group element is the identity.
    let first = &res.diagnostics[0];
    assert!((first.z_h2 - first.y_h2).abs() < 1e-12);

    // A z-only march leaves the physical columns unset, and its csv says so.
    let zonly = solve_random_pde(&y0, &path, &noise, &wide_rule(0.1), 1e-2, &SolverOptions::default())
        .unwrap();
    assert!(zonly.y_states.is_empty());
    assert!(zonly.terminal_y().is_none());
    assert!(zonly.diagnostics.iter().all(|row| row.y_h2.is_nan() && row.mass.is_nan()));
}

#[test]
fn periodic_wrap_of_the_transform_is_seamless() {
    // Large path values wind the flow around the circle; the transform must
    // stay smooth and periodic. Compare against the closed-form group
    // action for a constant advection field, where winding is explicit.
    let grid = grid256();
    let noise = NoiseSpec::new(Field::constant(grid, 1.0), Field::zeros(grid)).unwrap();
    let y0 = bump(grid);
    let w = 9.5; // about 1.5 turns around the torus
    let moved = flow::group_apply(&noise, -w, &y0).unwrap();
    let expected = Field::from_fn(grid, |x| 1.0 + 0.5 * (x - w).cos());
    assert!(moved.sub(&expected).max_abs() < 1e-10);
    assert!((moved.values()[0] - (1.0 + 0.5 * (TAU - w.rem_euclid(TAU)).cos())).abs() < 1e-10);
}
