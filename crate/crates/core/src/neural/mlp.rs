//! Single-hidden-layer autoregressive MLP trained by full-batch gradient descent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Design, LagSpec, Normalizer, OneStepModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Smallest and largest hidden sizes tried by cross-validation.
    pub hidden_min: usize,
    pub hidden_max: usize,
    /// Skips cross-validation when set.
    pub hidden: Option<usize>,
    pub cv_folds: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Training stops once the loss has not improved by this relative amount
    /// for `patience` epochs.
    pub min_improvement: f64,
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_min: 2,
            hidden_max: 20,
            hidden: None,
            cv_folds: 5,
            learning_rate: 0.1,
            max_epochs: 1000,
            min_improvement: 1e-6,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpForecaster {
    pub lag_spec: LagSpec,
    pub hidden_count: usize,
    /// Row-major `hidden_count × lags`.
    pub input_weights: Vec<f64>,
    pub input_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub normalizer: Normalizer,
}

impl OneStepModel for MlpForecaster {
    fn lag_spec(&self) -> &LagSpec {
        &self.lag_spec
    }

    fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    fn predict_normalized(&self, lagged: &[f64]) -> f64 {
        let l = lagged.len();
        let mut out = self.output_bias;
        for j in 0..self.hidden_count {
            let row = &self.input_weights[j * l..(j + 1) * l];
            let a = self.input_bias[j] + row.iter().zip(lagged).map(|(w, x)| w * x).sum::<f64>();
            out += self.output_weights[j] * sigmoid(a);
        }
        out
    }
}

struct Net {
    hidden: usize,
    inputs: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl Net {
    fn init(hidden: usize, inputs: usize, seed: u64) -> Self {
        let mut rng = crate::seeded_rng(seed);
        let r = 1.0 / (inputs as f64).sqrt();
        let w1 = (0..hidden * inputs).map(|_| rng.random_range(-r..r)).collect();
        let b1 = (0..hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
        // Zero output layer: the untrained net predicts the series mean.
        Self { hidden, inputs, w1, b1, w2: vec![0.0; hidden], b2: 0.0 }
    }

    fn hidden_activations(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..self.hidden {
            let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
            out[j] = sigmoid(self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }

    fn predict(&self, x: &[f64], h: &mut [f64]) -> f64 {
        self.hidden_activations(x, h);
        self.b2 + h.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>()
    }

    fn mse(&self, rows: &[&Vec<f64>], targets: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        rows.iter()
            .zip(targets)
            .map(|(x, y)| (self.predict(x, &mut h) - y).powi(2))
            .sum::<f64>()
            / rows.len() as f64
    }

    /// Full-batch gradient descent on the mean squared error.
    fn train(&mut self, rows: &[&Vec<f64>], targets: &[f64], config: &MlpConfig) -> Result<f64> {
        let n = rows.len() as f64;
        let (hn, li) = (self.hidden, self.inputs);
        let mut h = vec![0.0; hn];
        let mut g_w1 = vec![0.0; hn * li];
        let mut g_b1 = vec![0.0; hn];
        let mut g_w2 = vec![0.0; hn];
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        let mut loss = f64::INFINITY;
        for _ in 0..config.max_epochs {
            g_w1.iter_mut().for_each(|g| *g = 0.0);
            g_b1.iter_mut().for_each(|g| *g = 0.0);
            g_w2.iter_mut().for_each(|g| *g = 0.0);
            let mut g_b2 = 0.0;
            loss = 0.0;
            for (x, y) in rows.iter().zip(targets) {
                let pred = self.predict(x, &mut h);
                let err = pred - y;
                loss += err * err;
                let d_out = 2.0 * err / n;
                g_b2 += d_out;
                for j in 0..hn {
                    g_w2[j] += d_out * h[j];
                    let d_a = d_out * self.w2[j] * h[j] * (1.0 - h[j]);
                    g_b1[j] += d_a;
                    for (k, xv) in x.iter().enumerate() {
                        g_w1[j * li + k] += d_a * xv;
                    }
                }
            }
            loss /= n;
            if !loss.is_finite() {
                return Err(Error::Divergence("MLP training loss is not finite".into()));
            }
            if loss < best * (1.0 - config.min_improvement) {
                best = loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
            let lr = config.learning_rate;
            self.b2 -= lr * g_b2;
            for j in 0..hn {
                self.w2[j] -= lr * g_w2[j];
                self.b1[j] -= lr * g_b1[j];
            }
            for (w, g) in self.w1.iter_mut().zip(&g_w1) {
                *w -= lr * g;
            }
        }
        Ok(loss)
    }
}

fn into_forecaster(net: Net, lag_spec: &LagSpec, normalizer: Normalizer) -> MlpForecaster {
    MlpForecaster {
        lag_spec: lag_spec.clone(),
        hidden_count: net.hidden,
        input_weights: net.w1,
        input_bias: net.b1,
        output_weights: net.w2,
        output_bias: net.b2,
        normalizer,
    }
}

/// Blocked k-fold cross-validated one-step MSE for each hidden size; returns
/// the size with the lowest error (smaller wins ties).
pub(crate) fn select_hidden(design: &Design, config: &MlpConfig, seed: u64) -> Result<usize> {
    let n = design.rows.len();
    let folds = config.cv_folds.min(n);
    if folds < 2 || config.hidden_min >= config.hidden_max {
        return Ok(config.hidden_min);
    }
    let mut best = (f64::INFINITY, config.hidden_min);
    for hidden in config.hidden_min..=config.hidden_max {
        let mut total = 0.0;
        for f in 0..folds {
            let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
            let (mut train_x, mut train_y, mut test_x, mut test_y) = (vec![], vec![], vec![], vec![]);
            for (i, (x, y)) in design.rows.iter().zip(&design.targets).enumerate() {
                if i >= lo && i < hi {
                    test_x.push(x);
                    test_y.push(*y);
                } else {
                    train_x.push(x);
                    train_y.push(*y);
                }
            }
            let mut net = Net::init(hidden, design.rows[0].len(), seed);
            net.train(&train_x, &train_y, config)?;
            total += net.mse(&test_x, &test_y);
        }
        let score = total / folds as f64;
        if score < best.0 {
            best = (score, hidden);
        }
    }
    Ok(best.1)
}

/// Trains one MLP member. The hidden size comes from `config.hidden` or, when
/// unset, from cross-validation.
pub fn train_mlp_with(series: &[&[f64]], lag_spec: &LagSpec, config: &MlpConfig, seed: u64) -> Result<MlpForecaster> {
    let design = Design::build(series, lag_spec)?;
    let hidden = match config.hidden {
        Some(h) if h >= 1 => h,
        Some(_) => return Err(Error::InvalidParameter("hidden count must be >= 1".into())),
        None => select_hidden(&design, config, seed)?,
    };
    let rows: Vec<&Vec<f64>> = design.rows.iter().collect();
    let mut net = Net::init(hidden, lag_spec.lags.len(), seed);
    net.train(&rows, &design.targets, config)?;
    Ok(into_forecaster(net, lag_spec, design.normalizer))
}

/// Trains an MLP with default settings, choosing the hidden size by
/// five-fold cross-validation over 2..=20 neurons.
pub fn train_mlp(series: &[f64], lag_spec: &LagSpec, seed: u64) -> Result<MlpForecaster> {
    train_mlp_with(&[series], lag_spec, &MlpConfig::default(), seed)
}
