//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("actual value at index {index} is zero, MAPE is undefined")]
    ZeroActual { index: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("series too short: got {len}, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("timestamps must be strictly increasing (violated at index {index})")]
    NonIncreasingTime { index: usize },

    #[error("split fraction {fraction} leaves an empty side for length {len}")]
    EmptySplit { fraction: f64, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no ON windows found")]
    NoOnWindows,

    #[error("zero drain current at sample {index}")]
    ZeroCurrent { index: usize },

    #[error("no samples remain after filtering")]
    EmptyAfterFilter,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("covariance is not positive semidefinite")]
    NotPositiveSemidefinite,

    #[error("non-stationary or non-invertible optimum")]
    NonStationary,

    #[error("all candidate models failed to fit")]
    AllCandidatesFailed,

    #[error("divergence: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Returns the index of the first non-finite value, if any.
pub(crate) fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

pub fn ensure_finite(values: &[f64]) -> Result<()> {
    match first_non_finite(values) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
