//! Core building blocks for MOSFET ageing forecasting.
//!
//! The crate turns switching telemetry into ΔR_DS_ON degradation traces and
//! provides the classical forecasters compared by the benchmark harness:
//! state-space trackers (EKF/UKF), ARIMA, Holt's linear trend, and ensemble
//! MLP/ELM autoregressors. Curve similarity and piecewise-linear covariates
//! live in [`similarity`].

pub mod error;
pub mod ingest;
pub mod neural;
pub mod optim;
pub mod series;
pub mod similarity;
pub mod stat;
pub mod statespace;

pub use error::{Error, Result};
pub use series::{append_values, mape, split, DegradationTrace, ForecastResult, SplitSpec};

/// Deterministic RNG used everywhere a seed is accepted.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a `u64` seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
