//! Holt's linear trend method with SSE-optimal smoothing and initial state.

use serde::{Deserialize, Serialize};

use super::std_dev;
use crate::error::{ensure_finite, Error, Result};
use crate::optim::nelder_mead;
use crate::series::ForecastResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoltModel {
    pub alpha_s: f64,
    pub beta_s: f64,
    /// Level after the last observation.
    pub l: f64,
    /// Trend after the last observation.
    pub b: f64,
    /// Level and trend at the first observation.
    pub l0: f64,
    pub b0: f64,
    pub sse: f64,
    /// Index of the last observation absorbed.
    pub origin_index: usize,
}

impl HoltModel {
    /// Absorbs one more observation.
    pub fn update(&self, y: f64) -> Self {
        let l = self.alpha_s * y + (1.0 - self.alpha_s) * (self.l + self.b);
        let b = self.beta_s * (l - self.l) + (1.0 - self.beta_s) * self.b;
        Self { l, b, origin_index: self.origin_index + 1, ..*self }
    }
}

/// Runs the recursions from `(l0, b0)` at the first point; returns the SSE of
/// the one-step predictions for points 2..T and the final state.
fn run(series: &[f64], alpha: f64, beta: f64, l0: f64, b0: f64) -> (f64, f64, f64) {
    let (mut l, mut b) = (l0, b0);
    let mut sse = 0.0;
    for &y in &series[1..] {
        let pred = l + b;
        sse += (y - pred).powi(2);
        let l_new = alpha * y + (1.0 - alpha) * pred;
        b = beta * (l_new - l) + (1.0 - beta) * b;
        l = l_new;
    }
    (sse, l, b)
}

/// Fits `(α*, β*, l0, b0)` by Nelder–Mead on the one-step SSE, with the
/// smoothing parameters clipped to `[0, 1]`.
pub fn holt_fit(series: &[f64]) -> Result<HoltModel> {
    ensure_finite(series)?;
    if series.len() < 4 {
        return Err(Error::TooShort { len: series.len(), min: 4 });
    }
    // Holt is affine-equivariant, so fit on a standardised copy.
    let origin = series[0];
    let scale = match std_dev(series) {
        s if s > 1e-300 => s,
        _ => 1.0,
    };
    let z: Vec<f64> = series.iter().map(|y| (y - origin) / scale).collect();
    let objective = |v: &[f64]| run(&z, v[0].clamp(0.0, 1.0), v[1].clamp(0.0, 1.0), v[2], v[3]).0;

    let (l_init, b_init) = (z[0], z[1] - z[0]);
    let b_step = 0.1 * b_init.abs().max(0.1);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (a0, g0) in [(0.5, 0.5), (0.9, 0.1), (0.2, 0.05)] {
        let start = [a0, g0, l_init, b_init];
        let m = nelder_mead(objective, &start, &[0.1, 0.1, 0.1, b_step], 5000, 1e-22)?;
        // A second pass from the optimum escapes premature simplex collapse.
        let m = nelder_mead(objective, &m.x, &[0.05, 0.05, 0.02, 0.2 * b_step], 5000, 1e-24)?;
        let start_value = objective(&start);
        let (value, x) = if start_value < m.value { (start_value, start.to_vec()) } else { (m.value, m.x) };
        if best.as_ref().map_or(true, |(v, _)| value < *v) {
            best = Some((value, x));
        }
    }
    let (_, x) = best.ok_or_else(|| Error::NonConvergence("Holt".into()))?;
    let (alpha_s, beta_s) = (x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0));
    let (l0, b0) = (origin + scale * x[2], scale * x[3]);
    let (sse, l, b) = run(series, alpha_s, beta_s, l0, b0);
    if !sse.is_finite() {
        return Err(Error::NonConvergence("Holt SSE is not finite".into()));
    }
    Ok(HoltModel { alpha_s, beta_s, l, b, l0, b0, sse, origin_index: series.len() - 1 })
}

/// `ŷ_{t+h} = l + h·b` for `h = 1..=steps`.
pub fn holt_forecast(model: &HoltModel, steps: usize) -> Result<ForecastResult> {
    if steps == 0 {
        return Err(Error::InvalidParameter("forecast horizon must be >= 1".into()));
    }
    let point = (1..=steps).map(|h| model.l + h as f64 * model.b).collect();
    Ok(ForecastResult::point(model.origin_index, point))
}
