//! Desk-scale Temporal Fusion Transformer for degradation forecasting.
//!
//! Everything runs on `f64` matrices with a small reverse-mode tape, which
//! keeps gradients exact enough to check against finite differences.

pub mod blocks;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod params;
pub mod report;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use loss::quantile_loss;
pub use model::{AttentionMask, Prediction, TftConfig, TftModel, PRESETS};
pub use report::{extract_attention, AttentionReport, AttentionStep};
pub use train::{evaluate_loss, train_tft, TftSeries, TrainReport};
