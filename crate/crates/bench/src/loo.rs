//! Leave-one-out long-term forecasting over a family of traces.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use agecast_core::neural::ensemble::{ensemble_forecast, train_ensemble_multi};
use agecast_core::similarity::covariate_channels;
use agecast_core::{mape, DegradationTrace, ForecastResult, SplitSpec};
use agecast_tft::{AttentionReport, TftConfig};

use crate::benchmark::{data_hash, Metadata, TraceData};
use crate::engine::{train_tft_engine, ModelKind, ModelSettings};
use crate::error::{Error, Result};
use crate::walk::RefitMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooRow {
    pub held_out: String,
    pub model: ModelKind,
    pub train_fraction: f64,
    pub seed: u64,
    /// Index of the first forecast point.
    pub start: usize,
    pub mape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastResult>,
    pub quantile_crossings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionReport>,
    pub runtime_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub metadata: Metadata,
    pub rows: Vec<LooRow>,
    pub traces: Vec<TraceData>,
}

impl LooReport {
    pub fn new(traces: &[DegradationTrace], settings_hash: String, rows: Vec<LooRow>) -> Self {
        Self {
            metadata: Metadata::new(settings_hash, data_hash(traces), RefitMode::Literal),
            rows,
            traces: traces.iter().map(TraceData::from).collect(),
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn without_runtime(&self) -> Self {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|row| row.runtime_seconds = 0.0);
        r
    }

    pub fn mean_mape(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.mape).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Forecasts `target` from its `train_fraction` point to its end with a model
/// trained on `train` only. TFT blocks are iterated to cover the horizon.
pub fn long_term_forecast(
    model: ModelKind,
    train: &[DegradationTrace],
    target: &DegradationTrace,
    train_fraction: f64,
    seed: u64,
    settings: &ModelSettings,
    tft: Option<&TftConfig>,
) -> Result<(usize, ForecastResult, Option<AttentionReport>)> {
    let p = SplitSpec::new(train_fraction)?.train_len(target.len());
    let h = target.len() - p;
    if h == 0 {
        return Err(Error::Config(format!("train fraction {train_fraction} leaves nothing to forecast")));
    }
    let history = &target.values()[..p];
    match model {
        ModelKind::Tft | ModelKind::TftWcov => {
            let cfg = match tft {
                Some(c) => c.clone(),
                None => settings.tft_config(seed)?,
            };
            let channels = if model == ModelKind::TftWcov { Some(covariate_channels(train)?) } else { None };
            let engine = train_tft_engine(train, None, channels, &cfg, target.id(), target.len())?;
            let forecast = engine.forecast(history, h)?;
            let attention = engine.attention(history).ok();
            Ok((p, forecast, attention))
        }
        ModelKind::Eelm => {
            let series: Vec<&[f64]> = train.iter().map(|t| t.values()).collect();
            let ens = train_ensemble_multi(&series, &settings.eelm, seed)?;
            Ok((p, ensemble_forecast(&ens, history, h)?, None))
        }
        other => Err(Error::Config(format!("{other} is not a long-term model; use TFT, TFT-wCov or E-ELM"))),
    }
}

/// Holds out each trace in turn, trains on the rest and forecasts the held-out
/// trace from the `train_fraction` point to its end.
pub fn loo_long_term(
    traces: &[DegradationTrace],
    model: ModelKind,
    train_fraction: f64,
    seed: u64,
    settings: &ModelSettings,
) -> Result<Vec<LooRow>> {
    if traces.len() < 2 {
        return Err(Error::Config(format!("a family needs at least 2 traces, got {}", traces.len())));
    }
    if !matches!(model, ModelKind::Tft | ModelKind::TftWcov | ModelKind::Eelm) {
        return Err(Error::Config(format!("{model} is not a long-term model; use TFT, TFT-wCov or E-ELM")));
    }
    SplitSpec::new(train_fraction).map_err(|e| Error::Config(e.to_string()))?;
    if model.is_tft() {
        settings.tft_config(seed).map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok((0..traces.len())
        .map(|i| {
            let clock = Instant::now();
            let target = &traces[i];
            let train: Vec<DegradationTrace> =
                traces.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| t.clone()).collect();
            let outcome = long_term_forecast(model, &train, target, train_fraction, seed, settings, None)
                .and_then(|(p, f, att)| Ok((p, mape(&target.values()[p..], &f.point)?, f, att)));
            let mut row = LooRow {
                held_out: target.id().to_string(),
                model,
                train_fraction,
                seed,
                start: SplitSpec::new(train_fraction).expect("checked").train_len(target.len()),
                mape: None,
                forecast: None,
                quantile_crossings: 0,
                attention: None,
                runtime_seconds: 0.0,
                error: None,
            };
            match outcome {
                Ok((p, m, f, att)) => {
                    row.start = p;
                    row.mape = Some(m);
                    row.quantile_crossings = f.quantile_crossings();
                    row.forecast = Some(f);
                    row.attention = att;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row.runtime_seconds = clock.elapsed().as_secs_f64();
            row
        })
        .collect())
}
