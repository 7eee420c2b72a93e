use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operator is not unitary (residual {0:.3e})")]
    NotUnitary(f64),
    #[error("rank-deficient error space: {0}")]
    RankDeficient(String),
    #[error("non-physical density matrix: {0}")]
    NonPhysical(String),
    #[error("state annihilated by jump operator (norm {0:.3e})")]
    Annihilated(f64),
    #[error("inconsistent coherence times: dephasing rate {0:.3e} per us is negative")]
    InconsistentCoherence(f64),
    #[error("pulse of {duration_ns} ns is shorter than two ramps of {ramp_ns} ns")]
    PulseTooShort { duration_ns: f64, ramp_ns: f64 },
    #[error("non-finite cost at iteration {0}")]
    NonFinite(usize),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EstError>;
