use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use est_core::errormodel::fit::Aliasing;
use est_core::errormodel::DecayModelParams;
use est_core::experiment::RecoveryKind;
use est_core::grape::{Mode, Schedule};
use est_core::hilbert::{ControlSystem, SystemFile};
use est_core::pulse::{PulseConstraints, PulseEnvelope};
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub const PARAMS_ENV: &str = "ESTCTL_DEFAULT_PARAMS";

/// Parses JSON, naming the offending key on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("invalid configuration at `{path}`: {}", e.into_inner())
    })
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_json(&text)
}

/// Resolves `p` against the directory of the configuration file.
pub fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Loads the system-parameters file named in a configuration, falling back to
/// `ESTCTL_DEFAULT_PARAMS` and then to the built-in defaults.
pub fn load_system(config: &Path, system: &Option<PathBuf>, cavity_dim: Option<usize>) -> Result<ControlSystem> {
    let mut file = match (system, std::env::var_os(PARAMS_ENV)) {
        (Some(p), _) => {
            let p = resolve(config, p);
            SystemFile::load(&p).with_context(|| format!("loading system file {}", p.display()))?
        }
        (None, Some(p)) => SystemFile::load(Path::new(&p))
            .with_context(|| format!("loading {PARAMS_ENV}={}", p.to_string_lossy()))?,
        (None, None) => SystemFile::default(),
    };
    if let Some(d) = cavity_dim {
        file.cavity_dim = d;
    }
    Ok(ControlSystem::from_file(&file)?)
}

pub fn load_pulse(config: &Path, p: &Path) -> Result<PulseEnvelope> {
    let p = resolve(config, p);
    PulseEnvelope::load(&p).with_context(|| format!("loading pulse {}", p.display()))
}

fn default_duration() -> f64 {
    1000.0
}

fn default_dt() -> f64 {
    1.0
}

fn default_x() -> String {
    "X".into()
}

fn default_initial() -> String {
    "+Z".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub system: Option<PathBuf>,
    pub cavity_dim: Option<usize>,
    pub target: String,
    pub mode: Mode,
    #[serde(default = "default_duration")]
    pub duration_ns: f64,
    #[serde(default = "default_dt")]
    pub dt_ns: f64,
    #[serde(default)]
    pub constraints: PulseConstraints,
    #[serde(default)]
    pub schedule: Schedule,
    /// Idle length folded into the recovery target.
    pub compensate_ns: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub system: Option<PathBuf>,
    pub cavity_dim: Option<usize>,
    pub pulse: PathBuf,
    #[serde(default = "default_x")]
    pub target: String,
    /// Cardinal label of the start for the trajectory mismatch.
    #[serde(default = "default_initial")]
    pub initial: String,
}

fn default_n_times() -> usize {
    101
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSweepConfig {
    pub system: Option<PathBuf>,
    pub cavity_dim: Option<usize>,
    pub pulse: PathBuf,
    #[serde(default = "default_x")]
    pub target: String,
    #[serde(default = "default_n_times")]
    pub n_times: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Sequence,
    GateReport,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateEntry {
    /// `X`, `H`, `T` or `identity`.
    pub name: String,
    pub pulse: Option<PathBuf>,
}

fn default_recovery() -> RecoveryKind {
    RecoveryKind::Ideal
}

fn default_reset() -> f64 {
    1200.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: Option<PathBuf>,
    pub cavity_dim: Option<usize>,
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub gates: Vec<GateEntry>,
    #[serde(default = "default_recovery")]
    pub recovery: RecoveryKind,
    pub recovery_pulse: Option<PathBuf>,
    #[serde(default = "default_reset")]
    pub reset_ns: f64,
    #[serde(default)]
    pub counts: Vec<u32>,
    #[serde(default = "default_true")]
    pub lossy: bool,
    pub pulse: Option<PathBuf>,
    #[serde(default = "default_x")]
    pub target: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWhich {
    Code,
    Error,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: PathBuf,
    pub which: FitWhich,
    #[serde(default)]
    pub fixed: DecayModelParams,
    pub aliasing: Option<Aliasing>,
    #[serde(default)]
    pub bootstrap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_radius() -> f64 {
    3.0
}

fn default_step() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerConfig {
    pub system: Option<PathBuf>,
    pub cavity_dim: Option<usize>,
    /// Cardinal label (`+Z`, `-X`, ...) or `fock:<n>`.
    #[serde(default = "default_initial")]
    pub state: String,
    /// When given, the state is evolved through this pulse first.
    pub pulse: Option<PathBuf>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}
