use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stoch_ch::{Error, Result};
use stoch_ch_cli::config::RunConfig;
use stoch_ch_cli::{runner, validate};

const EXIT_HELP: &str = "\
Exit codes:
    0   run reached the time horizon (or the command succeeded)
    1   unexpected I/O failure
    2   invalid configuration, flags, or input files
    3   a validation suite reported FAIL
    10  run stopped at the H2 radius
    11  run stopped at the path excursion bound
    12  run stopped on non-finite values";

#[derive(Parser)]
#[command(
    name = "stoch-ch",
    version,
    about = "Spectral laboratory for the stochastic Camassa-Holm equation with convection noise",
    after_help = EXIT_HELP
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (falls back to the config `out` field, then ./out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Suppress progress and report lines.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write manifest, snapshots, and diagnostics.
    Simulate(SimulateArgs),
    /// Apply the one-parameter group to a field file.
    Transform(TransformArgs),
    /// Strong-convergence study of the direct scheme on refined paths.
    Converge(ConvergeArgs),
    /// One trajectory per seed, with aggregate stopping statistics.
    Ensemble(EnsembleArgs),
    /// Run a named invariant suite and persist its report.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// deterministic, ds (transform pipeline), or direct.
    #[arg(long)]
    mode: Option<String>,

    /// Domain period.
    #[arg(long = "L", value_name = "LENGTH")]
    length: Option<f64>,

    /// Collocation points (power of two).
    #[arg(long)]
    n: Option<usize>,

    /// Time step.
    #[arg(long)]
    dt: Option<f64>,

    /// Time horizon.
    #[arg(long = "T", value_name = "T_MAX")]
    horizon: Option<f64>,

    /// Initial momentum preset, e.g. "1+0.5*cos:1" or "file:y0.csv".
    #[arg(long)]
    initial: Option<String>,

    /// Advection coefficient preset.
    #[arg(long)]
    xi: Option<String>,

    /// Zeroth-order coefficient preset, or "holm" for eta = 2 xi'.
    #[arg(long)]
    eta: Option<String>,

    /// Brownian path seed (stochastic modes).
    #[arg(long)]
    seed: Option<u64>,

    /// heun or euler-ito (direct mode).
    #[arg(long)]
    scheme: Option<String>,

    /// Keep every k-th step in snapshots and diagnostics.
    #[arg(long)]
    stride: Option<usize>,

    /// H2 stopping radius.
    #[arg(long, value_name = "R")]
    radius: Option<f64>,

    /// Path excursion bound.
    #[arg(long, value_name = "T_W")]
    excursion: Option<f64>,
}

impl SimulateArgs {
    fn apply(self, config: &mut RunConfig) -> Result<()> {
        if let Some(mode) = self.mode {
            config.mode = mode.parse()?;
        }
        if let Some(scheme) = self.scheme {
            config.scheme = scheme.parse()?;
        }
        if let Some(length) = self.length {
            config.grid.length = length;
        }
        if let Some(n) = self.n {
            config.grid.n = n;
        }
        if let Some(dt) = self.dt {
            config.time.dt = dt;
        }
        if let Some(t_max) = self.horizon {
            config.time.t_max = t_max;
        }
        if let Some(initial) = self.initial {
            config.initial = initial;
        }
        if let Some(xi) = self.xi {
            config.xi = xi;
        }
        if let Some(eta) = self.eta {
            config.eta = eta;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(stride) = self.stride {
            config.stride = stride;
        }
        if let Some(radius) = self.radius {
            config.stop.radius = Some(radius);
        }
        if let Some(excursion) = self.excursion {
            config.stop.excursion = excursion;
        }
        config.validate()
    }
}

#[derive(Args)]
struct TransformArgs {
    /// Field file (.csv, or .raw with its JSON sidecar).
    #[arg(long, value_name = "FILE")]
    field: PathBuf,

    /// Advection coefficient preset.
    #[arg(long, default_value = "0")]
    xi: String,

    /// Zeroth-order coefficient preset, or "holm".
    #[arg(long, default_value = "0")]
    eta: String,

    /// Group time; negative values invert the action.
    #[arg(long, allow_hyphen_values = true)]
    t: f64,
}

#[derive(Args)]
struct ConvergeArgs {
    /// Number of dyadic refinement levels (>= 2).
    #[arg(long)]
    levels: usize,

    /// Comma-separated Brownian seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct EnsembleArgs {
    /// File of whitespace- or comma-separated seeds; # starts a comment.
    #[arg(long = "seeds-file", value_name = "FILE")]
    seeds_file: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// spectral, group, transport, ch, stochastic, or all.
    #[arg(long, default_value = "all")]
    suite: String,
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(path) => {
            let origin = path.display().to_string();
            let text = fs::read_to_string(path)
                .map_err(|e| Error::format(&origin, format!("cannot read config: {e}")))?;
            RunConfig::parse(&text, &origin)
        }
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<i32> {
    let Cli { config: config_path, out: out_flag, quiet, command } = cli;
    let config = load_config(config_path.as_ref())?;
    match command {
        Command::Simulate(args) => {
            let mut config = config;
            args.apply(&mut config)?;
            let out = runner::resolve_out_dir(out_flag.as_deref(), &config);
            runner::simulate(&config, &out, quiet)
        }
        Command::Transform(args) => {
            let out = runner::resolve_out_dir(out_flag.as_deref(), &config);
            runner::transform(&args.field, &args.xi, &args.eta, args.t, &out, quiet)
        }
        Command::Converge(args) => {
            let out = runner::resolve_out_dir(out_flag.as_deref(), &config);
            runner::converge(&config, args.levels, &args.seeds, &out, quiet)
        }
        Command::Ensemble(args) => {
            let out = runner::resolve_out_dir(out_flag.as_deref(), &config);
            runner::ensemble(&config, &args.seeds_file, &out, quiet)
        }
        Command::Validate(args) => {
            let out = runner::resolve_out_dir(out_flag.as_deref(), &config);
            let reports = validate::run(&args.suite)?;
            if !quiet {
                print!("{}", validate::render(&reports));
            }
            let mut csv = String::from("suite,check,measured,bound,tolerance,status\n");
            for report in &reports {
                for line in report.to_csv().lines().skip(1) {
                    csv.push_str(line);
                    csv.push('\n');
                }
            }
            fs::create_dir_all(&out)?;
            fs::write(out.join(format!("validation_{}.csv", args.suite)), csv)?;
            let pass = reports.iter().all(|r| r.passed());
            Ok(if pass { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Io(_) => 1,
                Error::NonFinite { .. } => 12,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
