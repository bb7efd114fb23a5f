//! Run configuration: JSON schema, defaults, validation, and resolution
//! into the solver-level objects (grid, fields, noise, stop rule).

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stoch_ch::driver::{Scheme, StopRule};
use stoch_ch::noise::{parse_eta_preset, parse_preset};
use stoch_ch::{Error, Field, Grid1D, NoiseSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Period of the domain.
    #[serde(rename = "L")]
    pub length: f64,
    /// Number of collocation points; must be a power of two.
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { length: TAU, n: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub dt: f64,
    #[serde(rename = "T_max")]
    pub t_max: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { dt: 1e-3, t_max: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopConfig {
    /// H2 radius on the transformed state; null means 10 ||y0||_{H2}.
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    /// Bound on |w(t)|.
    #[serde(rename = "T_w")]
    pub excursion: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { radius: None, excursion: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Camassa-Holm without noise, fourth-order stepper.
    Deterministic,
    /// Transform pipeline: random PDE in z, mapped back through the group.
    Ds,
    /// Direct Stratonovich march of the noisy equation.
    Direct,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Deterministic => "deterministic",
            Mode::Ds => "ds",
            Mode::Direct => "direct",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(Mode::Deterministic),
            "ds" => Ok(Mode::Ds),
            "direct" => Ok(Mode::Direct),
            other => Err(Error::config(
                "mode",
                format!("expected deterministic, ds, or direct, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeChoice {
    #[serde(rename = "heun")]
    Heun,
    #[serde(rename = "euler-ito")]
    EulerIto,
}

impl SchemeChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeChoice::Heun => "heun",
            SchemeChoice::EulerIto => "euler-ito",
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            SchemeChoice::Heun => Scheme::HeunStratonovich,
            SchemeChoice::EulerIto => Scheme::EulerItoCorrected,
        }
    }
}

impl fmt::Display for SchemeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heun" => Ok(SchemeChoice::Heun),
            "euler-ito" => Ok(SchemeChoice::EulerIto),
            other => Err(Error::config(
                "scheme",
                format!("expected heun or euler-ito, got `{other}`"),
            )),
        }
    }
}

/// Full run description. Every field has a default, so `{}` is a valid
/// config; unknown keys are rejected at any nesting level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    /// Initial momentum y0, preset expression or file: path.
    pub initial: String,
    /// Advection coefficient preset.
    pub xi: String,
    /// Zeroth-order coefficient preset; "holm" couples eta = 2 xi'.
    pub eta: String,
    pub stop: StopConfig,
    pub mode: Mode,
    /// Direct-integrator scheme; ignored by the other modes.
    pub scheme: SchemeChoice,
    pub seed: u64,
    /// Keep every k-th step in snapshots and diagnostics.
    pub stride: usize,
    /// Ensemble worker cap; 0 lets the pool decide.
    pub threads: usize,
    /// Quantization of cached transform times; 0 keeps exact keys.
    pub cache_quantum: f64,
    /// Output directory; the --out flag takes precedence.
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            initial: "1+0.5*cos:1".to_string(),
            xi: "0".to_string(),
            eta: "0".to_string(),
            stop: StopConfig::default(),
            mode: Mode::Deterministic,
            scheme: SchemeChoice::Heun,
            seed: 0,
            stride: 1,
            threads: 0,
            cache_quantum: 0.0,
            out: None,
        }
    }
}

/// Config resolved into solver-level objects.
pub struct Setup {
    pub grid: Grid1D,
    pub y0: Field,
    pub noise: NoiseSpec,
    pub rule: StopRule,
    pub scheme: Scheme,
}

impl RunConfig {
    /// Parse a JSON document, fill defaults, and validate. `origin` names
    /// the source in diagnostics (a path, or "<config>").
    pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::format(origin, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Stable serialization: struct order is fixed, so equal configs give
    /// byte-identical documents.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::config(
                "grid.n",
                format!("must be a power of two of at least 8, got {n}"),
            ));
        }
        positive("grid.L", self.grid.length)?;
        positive("time.dt", self.time.dt)?;
        positive("time.T_max", self.time.t_max)?;
        if self.time.dt > self.time.t_max {
            return Err(Error::config(
                "time.dt",
                format!("must not exceed T_max = {}, got {}", self.time.t_max, self.time.dt),
            ));
        }
        if let Some(r) = self.stop.radius {
            positive("stop.R", r)?;
        }
        positive("stop.T_w", self.stop.excursion)?;
        if self.stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        if !(self.cache_quantum >= 0.0 && self.cache_quantum.is_finite()) {
            return Err(Error::config(
                "cache_quantum",
                format!("must be finite and non-negative, got {}", self.cache_quantum),
            ));
        }
        // Resolve the presets now so a bad expression fails at parse time,
        // not mid-run.
        self.setup()?;
        Ok(())
    }

    /// Build the grid, fields, noise, and stop rule this config describes.
    pub fn setup(&self) -> Result<Setup> {
        let grid = Grid1D::new(self.grid.length, self.grid.n)
            .map_err(|e| Error::config("grid", e.to_string()))?;
        let y0 = parse_preset(grid, &self.initial)
            .map_err(|e| Error::config("initial", e.to_string()))?;
        let xi = parse_preset(grid, &self.xi)
            .map_err(|e| Error::config("xi", e.to_string()))?;
        let eta = parse_eta_preset(grid, &self.eta, &xi)
            .map_err(|e| Error::config("eta", e.to_string()))?;
        let noise = NoiseSpec::new(xi, eta)
            .map_err(|e| Error::config("xi", e.to_string()))?;
        let radius = self.stop.radius.unwrap_or_else(|| 10.0 * y0.h2_norm());
        let rule = StopRule::new(radius, self.stop.excursion, self.time.t_max)
            .map_err(|e| Error::config("stop", e.to_string()))?;
        Ok(Setup { grid, y0, noise, rule, scheme: self.scheme.scheme() })
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}
