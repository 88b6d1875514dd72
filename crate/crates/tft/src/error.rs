use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("quantile level {0} is outside (0, 1)")]
    Quantile(f64),
    #[error("no training samples: {0}")]
    NoSamples(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("checkpoint does not match its configuration: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] agecast_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
