//! Run orchestration: dispatch a config to the right integrator, write the
//! manifest, snapshots, and diagnostics, and map stop reasons to exit codes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;

use serde::Serialize;
use stoch_ch::brownian::sample_brownian;
use stoch_ch::ch::{self, MomentumState};
use stoch_ch::driver::{
    direct_spde_solve, doss_sussman_solve, ensemble_run, EnsembleSpec, SolverOptions, StopReason,
    TrajectoryResult,
};
use stoch_ch::field::SobolevIndex;
use stoch_ch::noise::{parse_eta_preset, parse_preset};
use stoch_ch::{fio, flow, Error, NoiseSpec, Result};

use crate::config::{Mode, RunConfig};

/// Exit codes are a total function of the stop reason; a horizon stop is
/// the ordinary success path.
pub fn exit_code(reason: StopReason) -> i32 {
    match reason {
        StopReason::Horizon => 0,
        StopReason::H2Radius => 10,
        StopReason::PathExcursion => 11,
        StopReason::NonFinite => 12,
    }
}

/// Worker count for ensembles: the configured value, capped by the
/// STOCH_CH_THREADS environment variable when that is set.
pub fn effective_threads(configured: usize) -> usize {
    match std::env::var("STOCH_CH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap >= 1 => {
            if configured == 0 {
                cap
            } else {
                configured.min(cap)
            }
        }
        _ => configured,
    }
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<&'a [u64]>,
    git_describe: String,
}

fn write_manifest(out: &Path, config: &RunConfig, seed: Option<u64>, seeds: Option<&[u64]>) -> Result<()> {
    let manifest = Manifest { config, seed, seeds, git_describe: git_describe() };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(())
}

fn note(quiet: bool, msg: &str) {
    if !quiet {
        println!("{msg}");
    }
}

/// Deterministic march: fixed-dt fourth-order steps with a clamped final
/// step, per-stride snapshots, and a conserved-quantity diagnostics table.
fn run_deterministic(config: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    let setup = config.setup()?;
    let mut state = MomentumState::new(setup.y0, 0.0);
    let dt = config.time.dt;
    let t_max = config.time.t_max;

    let mut diag = String::from("time,mass,energy,H1,H2\n");
    let mut record = |state: &MomentumState, index: usize| -> Result<()> {
        let cons = ch::conserved_quantities(state);
        let _ = writeln!(
            diag,
            "{},{},{},{},{}",
            state.time,
            cons.mass,
            cons.energy,
            state.y.sobolev_norm(SobolevIndex::H1),
            state.y.h2_norm()
        );
        fio::write_csv(&state.y, out.join(format!("snapshot_{index:06}.csv")))?;
        Ok(())
    };

    record(&state, 0)?;
    let mut step = 0usize;
    let mut stored = 1usize;
    let code = loop {
        let remaining = t_max - state.time;
        if remaining <= t_max * 1e-12 {
            break 0;
        }
        let h = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        match ch::deterministic_step(&state, h) {
            Ok(next) => state = next,
            Err(Error::NonFinite { t, .. }) => {
                note(quiet, &format!("step produced non-finite values at t = {t}"));
                break exit_code(StopReason::NonFinite);
            }
            Err(e) => return Err(e),
        }
        step += 1;
        let last = t_max - state.time <= t_max * 1e-12;
        if step % config.stride == 0 || last {
            record(&state, stored)?;
            stored += 1;
        }
    };
    fs::write(out.join("diagnostics.csv"), diag)?;
    note(quiet, &format!("deterministic run to t = {}: {stored} snapshots", state.time));
    Ok(code)
}

fn write_trajectory(res: &TrajectoryResult, out: &Path) -> Result<()> {
    fs::write(out.join("diagnostics.csv"), res.diagnostics_csv())?;
    for (i, y) in res.y_states.iter().enumerate() {
        fio::write_csv(y, out.join(format!("y_{i:06}.csv")))?;
    }
    if let Some(z) = res.z_states.last() {
        fio::write_csv(z, out.join("z_terminal.csv"))?;
    }
    Ok(())
}

fn run_stochastic(config: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    let setup = config.setup()?;
    let path = sample_brownian(config.seed, config.time.t_max, config.time.dt)?;
    let options = SolverOptions {
        snapshot_stride: config.stride,
        cache_quantum: config.cache_quantum,
        ..SolverOptions::default()
    };
    let res = match config.mode {
        Mode::Ds => doss_sussman_solve(&setup.y0, &path, &setup.noise, &setup.rule, config.time.dt, &options)?,
        Mode::Direct => direct_spde_solve(
            &setup.y0,
            &path,
            &setup.noise,
            &setup.rule,
            config.time.dt,
            setup.scheme,
            &options,
        )?,
        Mode::Deterministic => unreachable!("dispatched earlier"),
    };
    write_trajectory(&res, out)?;
    note(
        quiet,
        &format!(
            "{} run, seed {}: stopped at theta = {} ({})",
            config.mode, config.seed, res.theta, res.stop_reason
        ),
    );
    Ok(exit_code(res.stop_reason))
}

/// Run the configured simulation, writing `manifest.json`,
/// `diagnostics.csv`, and snapshot field files into `out`.
pub fn simulate(config: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    fs::create_dir_all(out)?;
    write_manifest(out, config, Some(config.seed), None)?;
    match config.mode {
        Mode::Deterministic => run_deterministic(config, out, quiet),
        Mode::Ds | Mode::Direct => run_stochastic(config, out, quiet),
    }
}

/// Apply the one-parameter group U_t for the given coefficients to a field
/// read from disk; writes `transformed.csv`.
pub fn transform(
    field_path: &Path,
    xi: &str,
    eta: &str,
    t: f64,
    out: &Path,
    quiet: bool,
) -> Result<i32> {
    let f = fio::read_field(field_path)?;
    let grid = *f.grid();
    let xi_field = parse_preset(grid, xi).map_err(|e| Error::config("xi", e.to_string()))?;
    let eta_field =
        parse_eta_preset(grid, eta, &xi_field).map_err(|e| Error::config("eta", e.to_string()))?;
    let noise = NoiseSpec::new(xi_field, eta_field)?;
    let g = flow::group_apply(&noise, t, &f)?;
    fs::create_dir_all(out)?;
    fio::write_csv(&g, out.join("transformed.csv"))?;
    note(
        quiet,
        &format!("transformed at t = {t}: L2 {} -> {}", f.l2_norm(), g.l2_norm()),
    );
    Ok(0)
}

/// Keep only the endpoints of a march.
const ENDPOINTS_ONLY: usize = usize::MAX;

/// Strong-convergence study of the direct scheme against a fine-step
/// transform-pipeline reference on shared Brownian paths.
///
/// Level l runs at dt / 2^l on the l-times-refined path; the reference is
/// the pipeline solution one level finer. Writes per-(seed, level) errors
/// and fitted orders.
pub fn converge(
    config: &RunConfig,
    levels: usize,
    seeds: &[u64],
    out: &Path,
    quiet: bool,
) -> Result<i32> {
    if levels < 2 {
        return Err(Error::invalid("convergence study needs at least 2 levels"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("convergence study needs at least one seed"));
    }
    let setup = config.setup()?;
    let thin = SolverOptions {
        snapshot_stride: ENDPOINTS_ONLY,
        cache_quantum: config.cache_quantum,
        ..SolverOptions::default()
    };
    let base_dt = config.time.dt;

    fs::create_dir_all(out)?;
    write_manifest(out, config, None, Some(seeds))?;

    let mut table = String::from("seed,level,dt,error,stop_reason\n");
    let mut summary = String::from("stat,value\n");
    let mut rms = vec![0.0f64; levels];
    for &seed in seeds {
        let mut path = sample_brownian(seed, config.time.t_max, base_dt)?;
        let mut errors = Vec::with_capacity(levels);
        let mut level_paths = Vec::with_capacity(levels);
        for _ in 0..levels {
            level_paths.push(path.clone());
            path = path.refine();
        }
        let reference = doss_sussman_solve(
            &setup.y0,
            &path,
            &setup.noise,
            &setup.rule,
            base_dt / (1u64 << levels) as f64,
            &thin,
        )?;
        let y_ref = reference.terminal_y().expect("pipeline stores y");
        for (l, level_path) in level_paths.iter().enumerate() {
            let dt_l = base_dt / (1u64 << l) as f64;
            let res = direct_spde_solve(
                &setup.y0,
                level_path,
                &setup.noise,
                &setup.rule,
                dt_l,
                setup.scheme,
                &thin,
            )?;
            let err = res.terminal_y().expect("direct march stores y").sub(y_ref).l2_norm();
            let _ = writeln!(table, "{seed},{l},{dt_l},{err},{}", res.stop_reason);
            rms[l] += err * err;
            errors.push(err);
        }
        let order = fit_order(&errors);
        let _ = writeln!(summary, "order_seed_{seed},{order}");
    }
    for v in &mut rms {
        *v = (*v / seeds.len() as f64).sqrt();
    }
    let order_rms = fit_order(&rms);
    let _ = writeln!(summary, "order_rms,{order_rms}");
    fs::write(out.join("convergence.csv"), table)?;
    fs::write(out.join("convergence_summary.csv"), summary)?;
    note(
        quiet,
        &format!("{} scheme over {levels} levels: strong order {order_rms:.3}", config.scheme),
    );
    Ok(0)
}

/// Least-squares slope of log2(error) against the level index, negated so
/// a positive value is a convergence order.
fn fit_order(errors: &[f64]) -> f64 {
    let m = errors.len() as f64;
    let (mut sl, mut se, mut sll, mut sle) = (0.0, 0.0, 0.0, 0.0);
    for (l, &e) in errors.iter().enumerate() {
        let x = l as f64;
        let y = e.max(f64::MIN_POSITIVE).log2();
        sl += x;
        se += y;
        sll += x * x;
        sle += x * y;
    }
    let denom = m * sll - sl * sl;
    if denom.abs() > 0.0 {
        -(m * sle - sl * se) / denom
    } else {
        f64::NAN
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for token in line.split(|c: char| c.is_whitespace() || c == ',') {
            if token.is_empty() {
                continue;
            }
            let seed = token
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("bad seed `{token}` in seeds file")))?;
            seeds.push(seed);
        }
    }
    Ok(seeds)
}

/// One trajectory per seed from a seeds file, aggregated stopping
/// statistics; individual seed failures go into the CSV, not the exit code.
pub fn ensemble(config: &RunConfig, seeds_file: &Path, out: &Path, quiet: bool) -> Result<i32> {
    let text = fs::read_to_string(seeds_file).map_err(|e| {
        Error::format(seeds_file.display().to_string(), format!("cannot read seeds file: {e}"))
    })?;
    let seeds = parse_seeds(&text)?;
    let setup = config.setup()?;
    let scheme = match config.mode {
        Mode::Ds => None,
        Mode::Direct => Some(setup.scheme),
        Mode::Deterministic => {
            return Err(Error::config("mode", "ensemble needs a stochastic mode (ds or direct)"))
        }
    };
    let spec = EnsembleSpec {
        y0: setup.y0,
        noise: setup.noise,
        dt: config.time.dt,
        rule: setup.rule,
        scheme,
        options: SolverOptions {
            snapshot_stride: ENDPOINTS_ONLY,
            cache_quantum: config.cache_quantum,
            ..SolverOptions::default()
        },
        threads: effective_threads(config.threads),
    };
    let res = ensemble_run(&spec, &seeds)?;
    fs::create_dir_all(out)?;
    write_manifest(out, config, None, Some(&seeds))?;
    fs::write(out.join("ensemble.csv"), res.to_csv())?;
    fs::write(out.join("ensemble_summary.csv"), res.summary_csv())?;
    note(
        quiet,
        &format!(
            "{} trajectories, {} failures, mean theta {}",
            res.summaries.len(),
            res.failures.len(),
            res.theta_mean
        ),
    );
    Ok(0)
}

/// Shared output helper so every subcommand resolves the directory the
/// same way: flag, then config, then "./out".
pub fn resolve_out_dir(flag: Option<&Path>, config: &RunConfig) -> std::path::PathBuf {
    match (flag, &config.out) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => std::path::PathBuf::from(p),
        (None, None) => std::path::PathBuf::from("out"),
    }
}
