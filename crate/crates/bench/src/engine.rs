//! The forecasting engines compared by the harness, behind one trait.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use agecast_core::neural::ensemble::{ensemble_forecast, train_ensemble, EnsembleConfig, EnsembleForecaster};
use agecast_core::similarity::{covariate_channels, CovariateChannels};
use agecast_core::stat::arima::{arima_forecast, auto_arima};
use agecast_core::stat::holt::{holt_fit, holt_forecast};
use agecast_core::statespace::{forecast_filter, track, FilterConfig, FilterKind, Variant};
use agecast_core::{DegradationTrace, ForecastResult};
use agecast_tft::{extract_attention, train_tft, AttentionReport, TftConfig, TftModel, TftSeries};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "EKF")]
    Ekf,
    #[serde(rename = "UKF")]
    Ukf,
    #[serde(rename = "ARIMA")]
    Arima,
    #[serde(rename = "HOLT")]
    Holt,
    #[serde(rename = "E-NN")]
    Enn,
    #[serde(rename = "E-ELM")]
    Eelm,
    #[serde(rename = "TFT")]
    Tft,
    #[serde(rename = "TFT-wCov")]
    TftWcov,
    /// Returns the true future values; used to validate the harness itself.
    #[serde(rename = "ORACLE")]
    Oracle,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Ekf,
        ModelKind::Ukf,
        ModelKind::Arima,
        ModelKind::Holt,
        ModelKind::Enn,
        ModelKind::Eelm,
        ModelKind::Tft,
        ModelKind::TftWcov,
        ModelKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ekf => "EKF",
            ModelKind::Ukf => "UKF",
            ModelKind::Arima => "ARIMA",
            ModelKind::Holt => "HOLT",
            ModelKind::Enn => "E-NN",
            ModelKind::Eelm => "E-ELM",
            ModelKind::Tft => "TFT",
            ModelKind::TftWcov => "TFT-wCov",
            ModelKind::Oracle => "ORACLE",
        }
    }

    pub fn is_tft(self) -> bool {
        matches!(self, ModelKind::Tft | ModelKind::TftWcov)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

fn default_variant() -> Variant {
    Variant::A
}

/// Per-model settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub filter: FilterConfig,
    /// State transition used by EKF and UKF.
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub enn: EnsembleConfig,
    pub eelm: EnsembleConfig,
    pub tft: TftConfig,
    /// Architecture preset letter (A-G); overrides the TFT sizes when set.
    pub tft_preset: Option<char>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            variant: Variant::A,
            enn: EnsembleConfig::mlp(),
            eelm: EnsembleConfig::elm(),
            tft: TftConfig::default(),
            tft_preset: None,
        }
    }
}

impl ModelSettings {
    pub fn tft_config(&self, seed: u64) -> Result<TftConfig> {
        let mut cfg = self.tft.clone();
        if let Some(letter) = self.tft_preset {
            let p = TftConfig::preset(letter)?;
            cfg.d_model = p.d_model;
            cfg.heads = p.heads;
            cfg.lstm_layers = p.lstm_layers;
        }
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Known-input rows for a trace of `len` points: one row per time index,
/// holding the channel values at relative position `i / (len − 1)`. Rows
/// past the end repeat the final position.
pub fn covariate_rows(channels: Option<&CovariateChannels>, len: usize, rows: usize) -> Vec<Vec<f64>> {
    let denom = len.saturating_sub(1).max(1) as f64;
    (0..rows)
        .map(|i| channels.map_or_else(Vec::new, |c| c.at(i as f64 / denom)))
        .collect()
}

/// Fits on a history and forecasts ahead.
pub trait Forecaster {
    /// `times` holds the timestamps of `history`.
    fn fit_forecast(&mut self, times: &[f64], history: &[f64], h: usize) -> Result<ForecastResult>;
}

#[derive(Debug, Clone)]
pub struct TftEngine {
    pub model: TftModel,
    pub channels: Option<CovariateChannels>,
    /// Length of the trace being forecast; positions the covariates.
    pub len: usize,
    pub id: String,
}

impl TftEngine {
    pub fn rows(&self, needed: usize) -> Vec<Vec<f64>> {
        covariate_rows(self.channels.as_ref(), self.len, needed)
    }

    pub fn forecast(&self, history: &[f64], h: usize) -> Result<ForecastResult> {
        let tau = self.model.config.tau_max;
        let needed = history.len() + h.div_ceil(tau) * tau;
        Ok(self.model.forecast(history, &self.rows(needed), Some(&self.id), h)?)
    }

    /// Attention of the forecast made from the end of `history`.
    pub fn attention(&self, history: &[f64]) -> Result<AttentionReport> {
        let needed = history.len() + self.model.config.tau_max;
        Ok(extract_attention(&self.model, history, &self.rows(needed), Some(&self.id))?)
    }
}

/// Trains a TFT on `train` (each with its covariate rows positioned by its
/// own length) and wraps it for forecasting a trace of length `target_len`.
pub fn train_tft_engine(
    train: &[DegradationTrace],
    prefix: Option<usize>,
    channels: Option<CovariateChannels>,
    config: &TftConfig,
    target_id: &str,
    target_len: usize,
) -> Result<TftEngine> {
    let series: Vec<TftSeries> = train
        .iter()
        .map(|t| {
            let n = prefix.unwrap_or(t.len()).min(t.len());
            TftSeries {
                id: t.id().to_string(),
                values: t.values()[..n].to_vec(),
                covariates: covariate_rows(channels.as_ref(), t.len(), n),
            }
        })
        .collect();
    let (model, _) = train_tft(&series, config)?;
    Ok(TftEngine { model, channels, len: target_len, id: target_id.to_string() })
}

#[derive(Debug, Clone)]
pub enum Engine {
    Filter { kind: FilterKind, variant: Variant, config: FilterConfig },
    Arima,
    Holt,
    Ensemble {
        config: EnsembleConfig,
        seed: u64,
        /// A fit already made on exactly this history, reused once.
        cached: Option<(Vec<f64>, EnsembleForecaster)>,
    },
    Tft(Box<TftEngine>),
    Oracle { values: Vec<f64> },
}

impl Engine {
    /// Builds the engine for one walk-forward over `trace` starting with `p`
    /// training points. The TFT is trained here, once, on the first `p`
    /// points; the neural ensembles fix their hidden size here.
    pub fn prepare(
        kind: ModelKind,
        trace: &DegradationTrace,
        p: usize,
        seed: u64,
        settings: &ModelSettings,
        references: &[DegradationTrace],
    ) -> Result<Self> {
        Ok(match kind {
            ModelKind::Ekf | ModelKind::Ukf => Engine::Filter {
                kind: if kind == ModelKind::Ekf { FilterKind::Ekf } else { FilterKind::Ukf },
                variant: settings.variant,
                config: settings.filter.clone(),
            },
            ModelKind::Arima => Engine::Arima,
            ModelKind::Holt => Engine::Holt,
            ModelKind::Eelm => Engine::Ensemble { config: settings.eelm.clone(), seed, cached: None },
            ModelKind::Enn => {
                let mut config = settings.enn.clone();
                let history = trace.values()[..p].to_vec();
                let fit = train_ensemble(&history, &config, seed)?;
                config.mlp.hidden = Some(fit.hidden_count());
                Engine::Ensemble { config, seed, cached: Some((history, fit)) }
            }
            ModelKind::Tft | ModelKind::TftWcov => {
                let channels = if kind == ModelKind::TftWcov {
                    if references.is_empty() {
                        return Err(Error::Config("TFT-wCov needs at least one reference trace".into()));
                    }
                    Some(covariate_channels(references)?)
                } else {
                    None
                };
                let cfg = settings.tft_config(seed)?;
                let engine = train_tft_engine(std::slice::from_ref(trace), Some(p), channels, &cfg, trace.id(), trace.len())?;
                Engine::Tft(Box::new(engine))
            }
            ModelKind::Oracle => Engine::Oracle { values: trace.values().to_vec() },
        })
    }

    pub fn attention(&self, history: &[f64]) -> Option<AttentionReport> {
        match self {
            Engine::Tft(e) => e.attention(history).ok(),
            _ => None,
        }
    }
}

impl Forecaster for Engine {
    fn fit_forecast(&mut self, times: &[f64], history: &[f64], h: usize) -> Result<ForecastResult> {
        if h == 0 {
            return Err(Error::Config("forecast horizon must be >= 1".into()));
        }
        match self {
            Engine::Filter { kind, variant, config } => {
                let trace = DegradationTrace::new("window", times.to_vec(), history.to_vec())?;
                let (state, transition) = track(&trace, *kind, *variant, config)?;
                Ok(forecast_filter(&state, h, &transition)?)
            }
            Engine::Arima => {
                let model = auto_arima(history)?;
                Ok(arima_forecast(&model, history, h)?)
            }
            Engine::Holt => Ok(holt_forecast(&holt_fit(history)?, h)?),
            Engine::Ensemble { config, seed, cached } => {
                let fit = match cached.take() {
                    Some((prefix, fit)) if prefix == history => fit,
                    _ => train_ensemble(history, config, *seed)?,
                };
                Ok(ensemble_forecast(&fit, history, h)?)
            }
            Engine::Tft(e) => e.forecast(history, h),
            Engine::Oracle { values } => {
                let n = history.len();
                let future = values.get(n..n + h).ok_or_else(|| {
                    Error::Config(format!("oracle knows {} values, {} requested", values.len(), n + h))
                })?;
                Ok(ForecastResult::point(n - 1, future.to_vec()))
            }
        }
    }
}
