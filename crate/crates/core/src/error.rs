use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the decomposition library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("signal needs at least {min} samples, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("duplicate sample time {time}")]
    DuplicateTime { time: f64 },
    #[error("sample time {time} outside [0, 1]")]
    OutOfDomain { time: f64 },
    #[error("phase is not strictly increasing at index {index}")]
    NonMonotonePhase { index: usize },
    #[error("amplitude {value} at index {index} is not strictly positive")]
    NonPositiveAmplitude { index: usize, value: f64 },
    #[error("amplitude {value} at index {index} is below 1e-8")]
    AmplitudeTooSmall { index: usize, value: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("the sine branch is undefined for band n = 0")]
    SinZeroBand,
    #[error("regression input is empty")]
    EmptyInput,
    #[error("shape table needs at least 2 bins, got {0}")]
    InvalidBins(usize),
    #[error("invalid component partition: {0}")]
    InvalidPartition(String),
    #[error("band {ell} outside [0, {max}]")]
    BandOutOfRange { ell: usize, max: usize },
    #[error("invalid step side h = {0}: 1/h must be an integer >= 2")]
    InvalidStep(f64),
    #[error("lag {max_lag} must be smaller than the signal length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("decay fit needs at least 3 points above the floor, got {0}")]
    TraceTooShort(usize),
    #[error("noise variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
