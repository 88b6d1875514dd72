//! Classical statistical forecasters and the unit-root test they rely on.

pub mod adf;
pub mod arima;
pub mod holt;

pub use adf::{adf_test, default_adf_lag, AdfResult};
pub use arima::{arima_fit, arima_forecast, auto_arima, ArimaModel};
pub use holt::{holt_fit, holt_forecast, HoltModel};

/// Applies first differencing `d` times.
pub fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}
