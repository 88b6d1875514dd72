//! Median ensembles of MLP or ELM members that differ only by seed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::elm::{train_elm_multi, ElmConfig, ElmForecaster};
use super::lags::{select_lags, LagSpec};
use super::mlp::{select_hidden, train_mlp_with, MlpConfig, MlpForecaster};
use super::{forecast_recursive, Design, Normalizer, OneStepModel};
use crate::error::{Error, Result};
use crate::series::ForecastResult;

pub const ENSEMBLE_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberKind {
    Mlp,
    Elm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Member {
    Mlp(MlpForecaster),
    Elm(ElmForecaster),
}

impl OneStepModel for Member {
    fn lag_spec(&self) -> &LagSpec {
        match self {
            Member::Mlp(m) => m.lag_spec(),
            Member::Elm(m) => m.lag_spec(),
        }
    }

    fn normalizer(&self) -> Normalizer {
        match self {
            Member::Mlp(m) => m.normalizer(),
            Member::Elm(m) => m.normalizer(),
        }
    }

    fn predict_normalized(&self, lagged: &[f64]) -> f64 {
        match self {
            Member::Mlp(m) => m.predict_normalized(lagged),
            Member::Elm(m) => m.predict_normalized(lagged),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub kind: MemberKind,
    pub members: usize,
    /// Largest lag considered by lag selection.
    pub max_lag: usize,
    /// Fixed lag structure; selected from the data when absent.
    pub lag_spec: Option<LagSpec>,
    pub mlp: MlpConfig,
    pub elm: ElmConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            kind: MemberKind::Elm,
            members: ENSEMBLE_SIZE,
            max_lag: 5,
            lag_spec: None,
            mlp: MlpConfig::default(),
            elm: ElmConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn mlp() -> Self {
        Self { kind: MemberKind::Mlp, ..Default::default() }
    }

    pub fn elm() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecaster {
    pub members: Vec<Member>,
}

impl EnsembleForecaster {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("an ensemble needs at least one member".into()));
        }
        let spec = members[0].lag_spec();
        if members.iter().any(|m| m.lag_spec() != spec) {
            return Err(Error::InvalidParameter("ensemble members must share one lag spec".into()));
        }
        Ok(Self { members })
    }

    pub fn lag_spec(&self) -> &LagSpec {
        self.members[0].lag_spec()
    }

    /// Hidden size shared by all members.
    pub fn hidden_count(&self) -> usize {
        match &self.members[0] {
            Member::Mlp(m) => m.hidden_count,
            Member::Elm(m) => m.hidden_count,
        }
    }
}

/// Median of a non-empty slice (mean of the two central values for even length).
pub fn median(values: &[f64]) -> f64 {
    crate::series::median(values)
}

fn lag_spec_for(series: &[&[f64]], config: &EnsembleConfig) -> Result<LagSpec> {
    if let Some(spec) = &config.lag_spec {
        return Ok(spec.clone());
    }
    let mut lags = std::collections::BTreeSet::new();
    let mut difference_first = false;
    for s in series {
        let max_lag = config.max_lag.min(s.len().saturating_sub(1) / 3).max(1);
        let spec = select_lags(s, max_lag)?;
        difference_first |= spec.difference_first;
        lags.extend(spec.lags);
    }
    LagSpec::new(lags.into_iter().collect(), difference_first)
}

/// Trains an ensemble on one or more series. For MLPs the hidden size is
/// chosen once by cross-validation and shared by every member.
pub fn train_ensemble_multi(series: &[&[f64]], config: &EnsembleConfig, seed: u64) -> Result<EnsembleForecaster> {
    if config.members == 0 {
        return Err(Error::InvalidParameter("members must be >= 1".into()));
    }
    let spec = lag_spec_for(series, config)?;
    let mut rng = crate::seeded_rng(seed);
    let seeds: Vec<u64> = (0..config.members).map(|_| rng.random()).collect();
    let members = match config.kind {
        MemberKind::Elm => seeds
            .iter()
            .map(|&s| train_elm_multi(series, &spec, &config.elm, s).map(Member::Elm))
            .collect::<Result<Vec<_>>>()?,
        MemberKind::Mlp => {
            let hidden = match config.mlp.hidden {
                Some(h) => h,
                None => select_hidden(&Design::build(series, &spec)?, &config.mlp, seed)?,
            };
            let cfg = MlpConfig { hidden: Some(hidden), ..config.mlp.clone() };
            seeds
                .iter()
                .map(|&s| train_mlp_with(series, &spec, &cfg, s).map(Member::Mlp))
                .collect::<Result<Vec<_>>>()?
        }
    };
    EnsembleForecaster::new(members)
}

pub fn train_ensemble(series: &[f64], config: &EnsembleConfig, seed: u64) -> Result<EnsembleForecaster> {
    train_ensemble_multi(&[series], config, seed)
}

/// Per-step median of the members' recursive forecasts.
pub fn ensemble_forecast(ensemble: &EnsembleForecaster, history: &[f64], h: usize) -> Result<ForecastResult> {
    let paths = ensemble
        .members
        .iter()
        .map(|m| forecast_recursive(m, history, h).map(|f| f.point))
        .collect::<Result<Vec<_>>>()?;
    let mut point = Vec::with_capacity(h);
    let mut column = vec![0.0; paths.len()];
    for step in 0..h {
        for (c, p) in column.iter_mut().zip(&paths) {
            *c = p[step];
        }
        if let Some(i) = column.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("ensemble member {i} produced a non-finite forecast")));
        }
        point.push(median(&column));
    }
    Ok(ForecastResult::point(history.len() - 1, point))
}
