//! Benchmark harness for ΔR_DS_ON forecasters: walk-forward evaluation,
//! leave-one-out long-term forecasting, architecture sweeps and RUL.

pub mod benchmark;
pub mod engine;
pub mod error;
pub mod loo;
pub mod plots;
pub mod rul;
pub mod sweep;
pub mod synthetic;
pub mod walk;

pub use benchmark::{run_benchmark, run_on_traces, BenchmarkConfig, BenchmarkReport, ReportRow, TraceSource};
pub use engine::{Engine, Forecaster, ModelKind, ModelSettings};
pub use error::{Error, Result};
pub use loo::{loo_long_term, LooReport, LooRow};
pub use rul::{rul_from_threshold, RulEstimate};
pub use sweep::{sweep_architectures, SweepCell, SweepReport};
pub use synthetic::{synthetic_family, FamilyConfig};
pub use walk::{walk_forward, RefitMode, WalkForward};
