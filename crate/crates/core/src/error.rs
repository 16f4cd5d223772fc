use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("cutoff N = {n} exceeds the capacity of a grid with M = {m} (need N < M/2)")]
    Capacity { n: usize, m: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("coefficients are not Hermitian-symmetric (max defect {defect:e})")]
    SymmetryViolation { defect: f64 },

    #[error("operation requires a mean-zero field, but coeff(0) = {coeff0:e}")]
    MeanNonZero { coeff0: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sequence length mismatch: need at least {needed}, got {got}")]
    LengthMismatch { needed: usize, got: usize },

    #[error("snapshot format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
