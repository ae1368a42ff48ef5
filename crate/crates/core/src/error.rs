use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative off-diagonal rate at ({row}, {col}) in segment {segment}")]
    NegativeOffDiagonal {
        row: usize,
        col: usize,
        segment: usize,
    },
    #[error("column {col} of segment {segment} sums to {value:e}, not zero")]
    ColumnSumNonzero {
        col: usize,
        value: f64,
        segment: usize,
    },
    #[error("segments leave [{from}, {to}] uncovered or out of order")]
    SegmentGap { from: f64, to: f64 },
    #[error("non-finite rate at ({row}, {col}) in segment {segment}")]
    NonFiniteRate {
        row: usize,
        col: usize,
        segment: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state {index} out of range for {n_states} states")]
    StateOutOfRange { index: usize, n_states: usize },
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("rate-uncertainty scale must satisfy alpha >= 1, got {0}")]
    InvalidAlpha(f64),
    #[error("minmaxvar stress level must satisfy gamma >= 0, got {0}")]
    InvalidGamma(f64),
    #[error("integrator exceeded {0} steps")]
    StepLimitExceeded(usize),
    #[error("solution became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("terminal vector is invalid: {0}")]
    InvalidTerminal(String),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid price range: {0}")]
    InvalidRange(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
