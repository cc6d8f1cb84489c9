use thiserror::Error;

/// Configuration problems, each with its own diagnostic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("modes_per_dim must be even and at least 2 (got {0})")]
    OddModes(usize),
    #[error("batch_size exceeds particles ({batch} > {particles})")]
    BatchExceedsParticles { batch: usize, particles: usize },
    #[error("batch_size must be at least 1")]
    EmptyBatch,
    #[error("particles must be at least 1")]
    NoParticles,
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("{0} must be non-negative and finite")]
    Negative(&'static str),
    #[error("dt exceeds t_final ({dt} > {t_final})")]
    DtExceedsFinalTime { dt: f64, t_final: f64 },
    #[error("eps and lambda are both zero: screening parameter beta is undefined")]
    ScreeningUndefined,
    #[error("initial ball (center {center:?}, radius {radius}) crosses the domain boundary at +/-{half_len}")]
    BallOutsideDomain {
        center: [f64; 3],
        radius: f64,
        half_len: f64,
    },
    #[error("mass_split must lie in (0, 1) (got {0})")]
    MassSplit(f64),
    #[error("cannot read configuration {0}")]
    Unreadable(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("mode index {index:?} lies outside |j_i| <= {half}")]
    ModeOutOfRange { index: [i64; 3], half: usize },
    #[error("initial field modes are not Hermitian-symmetric at index {0:?}")]
    NotHermitian([i64; 3]),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical abort at step {step} (t = {time}): {reason}")]
    NumericalAbort { step: u64, time: f64, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("experiment: {0}")]
    Experiment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
