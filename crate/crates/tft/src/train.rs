//! Sliding-window training on the quantile loss with Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttentionMask, Sample, TftConfig, TftModel};
use crate::params::Adam;
use crate::tape::Tape;

/// One training series: values with covariate rows for the same time indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TftSeries {
    pub id: String,
    pub values: Vec<f64>,
    /// One row per value; every row has the same number of channels.
    pub covariates: Vec<Vec<f64>>,
}

impl TftSeries {
    /// A series without covariate channels.
    pub fn plain(id: impl Into<String>, values: Vec<f64>) -> Self {
        let covariates = vec![Vec::new(); values.len()];
        Self { id: id.into(), values, covariates }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch, in model units.
    pub epoch_losses: Vec<f64>,
    pub samples: usize,
}

struct Example {
    sample: Sample,
    target: Vec<f64>,
}

/// Increment scale: mean absolute one-step change across the training
/// series, times `tau_max`. Falls back to 1 for flat data.
fn increment_scale(series: &[TftSeries], tau_max: usize) -> f64 {
    let (mut total, mut count) = (0.0, 0usize);
    for s in series {
        for w in s.values.windows(2) {
            total += (w[1] - w[0]).abs();
            count += 1;
        }
    }
    let s = if count > 0 { total / count as f64 * tau_max as f64 } else { 0.0 };
    if s > 1e-300 && s.is_finite() {
        s
    } else {
        1.0
    }
}

fn examples(model: &TftModel, series: &[TftSeries]) -> Result<Vec<Example>> {
    let (w, tau) = (model.config.input_window, model.config.tau_max);
    let mut out = Vec::new();
    for s in series {
        for start in 0..=(s.values.len() - w - tau) {
            let history = &s.values[start..start + w];
            let sample = model.prepare(history, &s.covariates[start..start + w + tau], Some(&s.id))?;
            let last = history[w - 1];
            let target = s.values[start + w..start + w + tau].iter().map(|v| (v - last) / model.scale).collect();
            out.push(Example { sample, target });
        }
    }
    Ok(out)
}

fn validate_series(series: &[TftSeries], config: &TftConfig) -> Result<usize> {
    let first = series.first().ok_or_else(|| Error::NoSamples("no training series".into()))?;
    let channels = first.covariates.first().map_or(0, Vec::len);
    let need = config.input_window + config.tau_max;
    for s in series {
        if s.values.len() <= need {
            return Err(Error::NoSamples(format!(
                "series {} has {} values; more than {need} are needed",
                s.id,
                s.values.len()
            )));
        }
        if s.covariates.len() != s.values.len() || s.covariates.iter().any(|r| r.len() != channels) {
            return Err(Error::Shape(format!("series {}: one covariate row of {channels} channels per value", s.id)));
        }
        agecast_core::error::ensure_finite(&s.values)?;
    }
    Ok(channels)
}

/// Trains a model on every sliding window of every series. Deterministic
/// for a given configuration and data.
pub fn train_tft(series: &[TftSeries], config: &TftConfig) -> Result<(TftModel, TrainReport)> {
    config.validate()?;
    let channels = validate_series(series, config)?;
    let mut ids: Vec<String> = Vec::new();
    for s in series {
        if !ids.contains(&s.id) {
            ids.push(s.id.clone());
        }
    }
    let scale = increment_scale(series, config.tau_max);
    let mut model = TftModel::new(config.clone(), channels, ids, scale)?;
    let data = examples(&model, series)?;
    let report = fit(&mut model, &data, config.max_epochs)?;
    Ok((model, report))
}

fn fit(model: &mut TftModel, data: &[Example], epochs: usize) -> Result<TrainReport> {
    let cfg = model.config.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = agecast_core::seeded_rng(cfg.seed ^ 0x5eed_7f7);
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut tape = Tape::new();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.params.zeros_like();
            for &i in batch {
                let ex = &data[i];
                tape.clear();
                let dropout_seed: u64 = rng.random();
                let mut ctx = model.training_ctx(&mut tape, dropout_seed);
                let out = model.forward(&mut ctx, &ex.sample, AttentionMask::Causal);
                let loss = ctx.tape.quantile_loss(out.prediction, &ex.target, &cfg.quantiles);
                let value = ctx.tape.value(loss).data[0];
                if !value.is_finite() {
                    return Err(Error::Divergence(format!("non-finite loss in epoch {epoch}")));
                }
                epoch_total += value;
                let g = tape.backward(loss);
                for (id, gt) in tape.param_grads(&g) {
                    grads[id.0].add_assign(gt);
                }
            }
            let n = batch.len() as f64;
            for g in &mut grads {
                g.data.iter_mut().for_each(|v| *v /= n);
            }
            adam.update(&mut model.params, &grads);
        }
        if !model.params.is_finite() {
            return Err(Error::Divergence(format!("non-finite parameters after epoch {epoch}")));
        }
        epoch_losses.push(epoch_total / data.len() as f64);
    }
    Ok(TrainReport { epoch_losses, samples: data.len() })
}

/// Mean quantile loss of `model` over every window of `series`, evaluated
/// without dropout.
pub fn evaluate_loss(model: &TftModel, series: &[TftSeries]) -> Result<f64> {
    validate_series(series, &model.config)?;
    let data = examples(model, series)?;
    let mut total = 0.0;
    for ex in &data {
        let (pred, _) = model.forward_normalized(&ex.sample, AttentionMask::Causal);
        let rows: Vec<Vec<f64>> = pred.to_rows();
        total += crate::loss::horizon_loss(&ex.target, &rows, &model.config.quantiles)?;
    }
    Ok(total / data.len() as f64)
}
