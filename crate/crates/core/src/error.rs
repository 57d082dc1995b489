use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} is not a power of two >= 8")]
    InvalidGrid(usize),
    #[error("grid mismatch: {0} vs {1} modes")]
    GridMismatch(usize, usize),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("invalid mollifier: {0}")]
    InvalidMollifier(String),
    #[error("mollifier support R/eps = {support} exceeds N/2 = {half}")]
    IncompatibleGrid { support: f64, half: usize },
    #[error("block index {j} outside -1..={j_max}")]
    BlockIndex { j: i32, j_max: i32 },
    #[error("invalid norm parameters: {0}")]
    InvalidNorm(String),
    #[error("path needs at least 2 samples, got {0}")]
    ShortPath(usize),
    #[error("paths are misaligned: {0}")]
    Misaligned(String),
    #[error("step {step} out of range 0..{n_steps}")]
    StepOutOfRange { step: usize, n_steps: usize },
    #[error("zero wavenumber")]
    ZeroWavenumber,
    #[error("renormalization identity violated: {0}")]
    Identity(String),
    #[error("constants do not match the mollifier or scheme: {0}")]
    ConstantsMismatch(String),
    #[error("stochastic heat equation lost positivity at step {step} (min {min:e}); reduce dt")]
    NonPositive { step: usize, min: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
