//! Run configuration: a TOML document per run.
//!
//! ```toml
//! [params]
//! sigma = 1.0
//! gravity = 1.0
//! speed = 1.0
//! depth = "finite"      # or "infinite"
//! b = 0.5
//!
//! [forcing]
//! preset = "cos"        # or "sin", "two-mode"; or give `modes`
//! kappa = 0.01
//!
//! [grid]
//! n = 128
//! ```

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::continuation::{StepConfig, StopConfig};
use crate::dtn::DtnConfig;
use crate::dynamics::Scheme;
use crate::spectral::{project_mean_zero, Depth, FluidParams, Grid, GridFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SmallWave,
    SweepSigma,
    Continue,
    Evolve,
    Verify,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::SmallWave => "small-wave",
            Mode::SweepSigma => "sweep-sigma",
            Mode::Continue => "continue",
            Mode::Evolve => "evolve",
            Mode::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthKind {
    Finite,
    Infinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub sigma: f64,
    pub gravity: f64,
    pub speed: f64,
    pub depth: DepthKind,
    /// Bottom depth (finite depth only).
    pub b: Option<f64>,
    /// Strip depth used to realize the deep fluid.
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

fn default_truncation() -> f64 {
    10.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Cos,
    Sin,
    TwoMode,
}

/// One Fourier term `a cos(kx) + b sin(kx)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTerm {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    pub preset: Option<Preset>,
    pub modes: Option<Vec<ModeTerm>>,
    #[serde(default)]
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_n")]
    pub n: usize,
    pub nz: Option<usize>,
    pub stretch: Option<f64>,
}

fn default_n() -> usize {
    256
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: default_n(), nz: None, stretch: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancesSection {
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub accept_tol: f64,
    pub newton_tol: f64,
    pub dtn_tol: f64,
    pub clearance_floor: f64,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        Self {
            picard_tol: 1e-12,
            picard_max_iter: 200,
            accept_tol: 1e-8,
            newton_tol: 1e-11,
            dtn_tol: 1e-13,
            clearance_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// `1` follows increasing forcing amplitude, `-1` decreasing.
    pub direction: f64,
    pub max_c1: f64,
    pub clearance_fraction: f64,
    pub kappa_max: f64,
    pub max_points: usize,
    pub max_grid: usize,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        let step = StepConfig::<f64>::default();
        let stop = StopConfig::<f64>::default();
        Self {
            initial_step: step.initial,
            min_step: step.min,
            max_step: step.max,
            direction: step.direction,
            max_c1: stop.max_c1,
            clearance_fraction: stop.clearance_fraction,
            kappa_max: stop.kappa_max,
            max_points: stop.max_points,
            max_grid: stop.max_grid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub sigmas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { sigmas: vec![1e-1, 1e-2, 1e-3] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialProfile {
    Flat,
    SmallWave,
    PerturbedSmallWave,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    CoMoving,
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub dt: f64,
    /// Defaults to one spatial period `2π/|γ|`.
    pub horizon: Option<f64>,
    pub scheme: SchemeKind,
    pub initial: InitialProfile,
    /// Sup norm of the random perturbation for `perturbed-small-wave`.
    pub noise: f64,
    pub samples: usize,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: None,
            scheme: SchemeKind::CoMoving,
            initial: InitialProfile::SmallWave,
            noise: 1e-3,
            samples: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the mode given on the command line.
    pub mode: Option<Mode>,
    pub params: ParamsSection,
    pub forcing: ForcingSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub tolerances: TolerancesSection,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String, std::io::Error),
    Parse(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(path, e) => write!(f, "cannot read {path}: {e}"),
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Invalid(list) => {
                writeln!(f, "invalid configuration:")?;
                for v in list {
                    writeln!(f, "  - {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Checks every documented range and reports all violations together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let p = &self.params;
        if p.speed == 0.0 || !p.speed.is_finite() {
            bad.push("speed must be nonzero".to_string());
        }
        if !(p.sigma >= 0.0) {
            bad.push("sigma must be >= 0".into());
        }
        if !(p.gravity >= 0.0) {
            bad.push("gravity must be >= 0".into());
        }
        if p.sigma == 0.0 && p.gravity == 0.0 {
            bad.push("sigma and gravity cannot both vanish".into());
        }
        match (p.depth, p.b) {
            (DepthKind::Finite, None) => bad.push("finite depth needs `b`".into()),
            (DepthKind::Finite, Some(b)) if !(b > 0.0) => bad.push("b must be positive".into()),
            (DepthKind::Infinite, Some(_)) => bad.push("`b` is only meaningful for finite depth".into()),
            _ => {}
        }
        if !(p.truncation > 0.0) {
            bad.push("truncation must be positive".into());
        }
        match (&self.forcing.preset, &self.forcing.modes) {
            (None, None) => bad.push("forcing needs a `preset` or a `modes` list".into()),
            (Some(_), Some(_)) => bad.push("give either forcing `preset` or `modes`, not both".into()),
            (None, Some(m)) if m.is_empty() => bad.push("forcing `modes` is empty".into()),
            _ => {}
        }
        if let Some(modes) = &self.forcing.modes {
            for m in modes {
                if m.k as usize >= self.grid.n / 2 {
                    bad.push(format!("forcing mode k = {} is not resolved on n = {}", m.k, self.grid.n));
                }
            }
        }
        if !self.forcing.kappa.is_finite() {
            bad.push("kappa must be finite".into());
        }
        let n = self.grid.n;
        if n < 8 || !n.is_power_of_two() {
            bad.push(format!("grid n = {n} must be a power of two >= 8"));
        }
        if let Some(nz) = self.grid.nz {
            if nz < 4 {
                bad.push("grid nz must be at least 4".into());
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("picard_tol", t.picard_tol),
            ("accept_tol", t.accept_tol),
            ("newton_tol", t.newton_tol),
            ("dtn_tol", t.dtn_tol),
        ] {
            if !(v > 0.0) {
                bad.push(format!("{name} must be positive"));
            }
        }
        if !(t.clearance_floor > 0.0 && t.clearance_floor < 1.0) {
            bad.push("clearance_floor must lie in (0, 1)".into());
        }
        if t.picard_max_iter == 0 {
            bad.push("picard_max_iter must be at least 1".into());
        }
        let c = &self.continuation;
        if !(c.min_step > 0.0 && c.initial_step >= c.min_step && c.max_step >= c.initial_step) {
            bad.push("continuation steps need 0 < min_step <= initial_step <= max_step".into());
        }
        if c.direction == 0.0 {
            bad.push("continuation direction must be nonzero".into());
        }
        if !(c.max_c1 > 0.0 && c.kappa_max > 0.0) {
            bad.push("max_c1 and kappa_max must be positive".into());
        }
        if !(c.clearance_fraction > 0.0 && c.clearance_fraction < 1.0) {
            bad.push("clearance_fraction must lie in (0, 1)".into());
        }
        if c.max_points < 2 {
            bad.push("max_points must be at least 2".into());
        }
        let s = &self.sweep.sigmas;
        if s.is_empty() || s.iter().any(|v| !(*v > 0.0)) || s.windows(2).any(|w| !(w[1] < w[0])) {
            bad.push("sweep sigmas must be positive and strictly decreasing".into());
        }
        let e = &self.evolve;
        if !(e.dt > 0.0) {
            bad.push("evolve dt must be positive".into());
        }
        if let Some(h) = e.horizon {
            if !(h >= e.dt) {
                bad.push("evolve horizon must be at least dt".into());
            }
        }
        if !(e.noise >= 0.0) {
            bad.push("evolve noise must be >= 0".into());
        }
        if e.samples == 0 {
            bad.push("evolve samples must be at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    pub fn depth(&self) -> Depth<f64> {
        match self.params.depth {
            DepthKind::Finite => Depth::Finite { b: self.params.b.unwrap_or(1.0) },
            DepthKind::Infinite => Depth::Infinite { truncation: self.params.truncation },
        }
    }

    pub fn fluid_params(&self) -> crate::Result<FluidParams<f64>> {
        FluidParams::new(self.params.sigma, self.params.gravity, self.params.speed, self.depth())
    }

    pub fn grid(&self) -> crate::Result<Arc<Grid<f64>>> {
        Grid::new(self.grid.n)
    }

    pub fn dtn_config(&self) -> DtnConfig<f64> {
        DtnConfig {
            nz: self.grid.nz,
            stretch: self.grid.stretch,
            clearance_floor: self.tolerances.clearance_floor,
            tol: self.tolerances.dtn_tol,
            ..DtnConfig::default()
        }
    }

    pub fn step_config(&self) -> StepConfig<f64> {
        StepConfig {
            initial: self.continuation.initial_step,
            min: self.continuation.min_step,
            max: self.continuation.max_step,
            direction: self.continuation.direction,
            accept_tol: self.tolerances.accept_tol,
            ..StepConfig::default()
        }
    }

    pub fn stop_config(&self) -> StopConfig<f64> {
        StopConfig {
            max_c1: self.continuation.max_c1,
            clearance_fraction: self.continuation.clearance_fraction,
            kappa_max: self.continuation.kappa_max,
            max_points: self.continuation.max_points,
            max_grid: self.continuation.max_grid,
            ..StopConfig::default()
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self.evolve.scheme {
            SchemeKind::CoMoving => Scheme::CoMoving,
            SchemeKind::Frozen => Scheme::Frozen,
        }
    }

    /// The forcing profile on `grid`, projected to mean zero. The second
    /// value is the removed mean (zero when nothing was projected).
    pub fn forcing_profile(&self, grid: &Arc<Grid<f64>>) -> (GridFunction<f64>, f64) {
        let terms: Vec<ModeTerm> = match (&self.forcing.preset, &self.forcing.modes) {
            (Some(Preset::Cos), _) => vec![ModeTerm { k: 1, cos: 1.0, sin: 0.0 }],
            (Some(Preset::Sin), _) => vec![ModeTerm { k: 1, cos: 0.0, sin: 1.0 }],
            (Some(Preset::TwoMode), _) => {
                vec![ModeTerm { k: 1, cos: 1.0, sin: 0.0 }, ModeTerm { k: 2, cos: 0.0, sin: 0.5 }]
            }
            (None, Some(m)) => m.clone(),
            (None, None) => Vec::new(),
        };
        let raw = GridFunction::from_fn(grid, |x| {
            terms.iter().map(|t| t.cos * (t.k as f64 * x).cos() + t.sin * (t.k as f64 * x).sin()).sum()
        });
        let mean = raw.mean();
        if mean.abs() > 1e-14 {
            log::info!("forcing profile has mean {mean:.6e}; projecting to mean zero");
            (project_mean_zero(&raw), mean)
        } else {
            (project_mean_zero(&raw), 0.0)
        }
    }
}
