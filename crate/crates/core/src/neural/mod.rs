//! Autoregressive neural forecasters: single-hidden-layer MLP and ELM, lag
//! selection, and median ensembles of either.
//!
//! Both model types share the same data path. The series is optionally first
//! differenced, z-scored with its own mean and standard deviation, and turned
//! into rows of lagged values. Forecasts are produced recursively and mapped
//! back through the normalisation and the differencing.

pub mod elm;
pub mod ensemble;
pub mod lags;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::series::ForecastResult;

pub use elm::{train_elm, train_elm_multi, ElmConfig, ElmForecaster};
pub use ensemble::{
    ensemble_forecast, median, train_ensemble, train_ensemble_multi, EnsembleConfig, EnsembleForecaster,
    Member, MemberKind, ENSEMBLE_SIZE,
};
pub use lags::{select_lags, LagSpec};
pub use mlp::{train_mlp, MlpConfig, MlpForecaster};

/// Affine z-score map shared by inputs and targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    /// Uses the population statistics of `values`; a vanishing spread falls
    /// back to unit scale so constant series stay representable.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let floor = 1e-12 * mean.abs().max(1e-300);
        Self { mean, std: if std > floor && std > 0.0 { std } else { 1.0 } }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// The working series a lag model sees: differenced if requested.
pub(crate) fn working_series(series: &[f64], spec: &LagSpec) -> Vec<f64> {
    if spec.difference_first {
        series.windows(2).map(|w| w[1] - w[0]).collect()
    } else {
        series.to_vec()
    }
}

/// Lagged design rows over several normalised working series.
pub(crate) struct Design {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub normalizer: Normalizer,
}

impl Design {
    pub fn build(series: &[&[f64]], spec: &LagSpec) -> Result<Self> {
        let working: Vec<Vec<f64>> = series.iter().map(|s| working_series(s, spec)).collect();
        let pooled: Vec<f64> = working.iter().flatten().copied().collect();
        ensure_finite(&pooled)?;
        let normalizer = Normalizer::fit(&pooled);
        let max_lag = spec.max_lag();
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for w in &working {
            let z: Vec<f64> = w.iter().map(|v| normalizer.normalize(*v)).collect();
            for t in max_lag..z.len() {
                rows.push(spec.lags.iter().map(|&l| z[t - l]).collect());
                targets.push(z[t]);
            }
        }
        if rows.is_empty() {
            let len = series.iter().map(|s| s.len()).max().unwrap_or(0);
            return Err(Error::TooShort { len, min: max_lag + 1 + usize::from(spec.difference_first) });
        }
        Ok(Self { rows, targets, normalizer })
    }
}

/// A fitted one-step autoregressive map in normalised units.
pub trait OneStepModel {
    fn lag_spec(&self) -> &LagSpec;
    fn normalizer(&self) -> Normalizer;
    /// Predicts the next normalised working value from lagged normalised values
    /// ordered as in [`LagSpec::lags`].
    fn predict_normalized(&self, lagged: &[f64]) -> f64;
}

/// Iterates one-step predictions `h` times, feeding each back as history.
pub fn forecast_recursive<M: OneStepModel + ?Sized>(model: &M, history: &[f64], h: usize) -> Result<ForecastResult> {
    ensure_finite(history)?;
    if h == 0 {
        return Err(Error::InvalidParameter("forecast horizon must be >= 1".into()));
    }
    let spec = model.lag_spec();
    let needed = spec.max_lag() + usize::from(spec.difference_first);
    if history.len() < needed {
        return Err(Error::TooShort { len: history.len(), min: needed });
    }
    let norm = model.normalizer();
    let mut z: Vec<f64> = working_series(history, spec).iter().map(|v| norm.normalize(*v)).collect();
    let mut lagged = vec![0.0; spec.lags.len()];
    let mut out = Vec::with_capacity(h);
    let mut level = *history.last().expect("checked non-empty");
    for _ in 0..h {
        let t = z.len();
        for (slot, &l) in lagged.iter_mut().zip(&spec.lags) {
            *slot = z[t - l];
        }
        let next = model.predict_normalized(&lagged);
        z.push(next);
        let value = norm.denormalize(next);
        let y = if spec.difference_first {
            level += value;
            level
        } else {
            value
        };
        if !y.is_finite() {
            return Err(Error::Divergence("recursive forecast became non-finite".into()));
        }
        out.push(y);
    }
    Ok(ForecastResult::point(history.len() - 1, out))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Affine {
        spec: LagSpec,
        norm: Normalizer,
        weights: Vec<f64>,
        bias: f64,
    }

    impl OneStepModel for Affine {
        fn lag_spec(&self) -> &LagSpec {
            &self.spec
        }
        fn normalizer(&self) -> Normalizer {
            self.norm
        }
        fn predict_normalized(&self, lagged: &[f64]) -> f64 {
            self.bias + lagged.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
        }
    }

    #[test]
    fn single_step_is_one_evaluation() {
        let m = Affine {
            spec: LagSpec::new(vec![1, 2], false).unwrap(),
            norm: Normalizer { mean: 0.0, std: 1.0 },
            weights: vec![0.5, 0.25],
            bias: 1.0,
        };
        let f = forecast_recursive(&m, &[4.0, 8.0], 1).unwrap();
        assert_eq!(f.point, vec![1.0 + 0.5 * 8.0 + 0.25 * 4.0]);
    }

    #[test]
    fn constant_model_constant_forecast() {
        let m = Affine {
            spec: LagSpec::new(vec![1], false).unwrap(),
            norm: Normalizer { mean: 3.0, std: 2.0 },
            weights: vec![0.0],
            bias: 0.5,
        };
        let f = forecast_recursive(&m, &[1.0, 2.0], 5).unwrap();
        assert!(f.point.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn differenced_unit_model_continues_line() {
        // Predicting the last difference again is exact on affine data.
        let y: Vec<f64> = (0..10).map(|t| 1.5 + 0.7 * t as f64).collect();
        let diffs: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        let m = Affine {
            spec: LagSpec::new(vec![1], true).unwrap(),
            norm: Normalizer::fit(&diffs),
            weights: vec![1.0],
            bias: 0.0,
        };
        let f = forecast_recursive(&m, &y, 6).unwrap();
        for (k, v) in f.point.iter().enumerate() {
            assert!((v - (1.5 + 0.7 * (10 + k) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn insufficient_history() {
        let m = Affine {
            spec: LagSpec::new(vec![1, 3], true).unwrap(),
            norm: Normalizer { mean: 0.0, std: 1.0 },
            weights: vec![0.0, 0.0],
            bias: 0.0,
        };
        assert!(matches!(forecast_recursive(&m, &[1.0, 2.0, 3.0], 2), Err(Error::TooShort { .. })));
    }

    proptest! {
        #[test]
        fn normalizer_round_trip(values in prop::collection::vec(-1e3f64..1e3, 1..40), probe in -1e3f64..1e3) {
            let n = Normalizer::fit(&values);
            prop_assert!((n.denormalize(n.normalize(probe)) - probe).abs() <= 1e-12 * probe.abs().max(1.0));
        }
    }
}
