//! Attention points: where each forecast step looks in the encoder window.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::TftModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionStep {
    /// Forecast step, starting at 1.
    pub tau: usize,
    /// Head-averaged weights over the encoder positions, renormalised to sum to 1.
    pub weights: Vec<f64>,
    /// Encoder position with the largest weight.
    pub argmax: usize,
    pub max_weight: f64,
    /// Share of the raw attention row that fell on encoder positions; the
    /// remainder went to earlier decoder positions.
    pub encoder_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    /// Time index of the first encoder position.
    pub window_start: usize,
    pub steps: Vec<AttentionStep>,
}

impl AttentionReport {
    /// `(time index, weight)` of the per-step maxima.
    pub fn max_points(&self) -> Vec<(usize, f64)> {
        self.steps.iter().map(|s| (self.window_start + s.argmax, s.max_weight)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs a forward pass on the window ending at the end of `history` and
/// collects the decoder rows of the attention matrix.
pub fn extract_attention(
    model: &TftModel,
    history: &[f64],
    covariates: &[Vec<f64>],
    static_id: Option<&str>,
) -> Result<AttentionReport> {
    let (w, tau) = (model.config.input_window, model.config.tau_max);
    if history.len() < w {
        return Err(agecast_core::Error::TooShort { len: history.len(), min: w }.into());
    }
    let n = history.len();
    let known = covariates.get(n - w..n + tau).ok_or_else(|| {
        crate::error::Error::Shape(format!("covariates cover {} time steps, {} needed", covariates.len(), n + tau))
    })?;
    let p = model.predict(&history[n - w..], known, static_id)?;
    let steps = (0..tau)
        .map(|t| {
            let row = &p.attention.row(w + t)[..w];
            let mass: f64 = row.iter().sum();
            let weights: Vec<f64> = row.iter().map(|v| v / mass).collect();
            let (argmax, max_weight) = weights
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
            AttentionStep { tau: t + 1, weights, argmax, max_weight, encoder_mass: mass }
        })
        .collect();
    Ok(AttentionReport { window_start: n - w, steps })
}
