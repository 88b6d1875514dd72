//! Lag selection by partial autocorrelation.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::stat::adf::{adf_test, default_adf_lag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    /// Strictly increasing, positive.
    pub lags: Vec<usize>,
    pub difference_first: bool,
}

impl LagSpec {
    pub fn new(lags: Vec<usize>, difference_first: bool) -> Result<Self> {
        if lags.is_empty() || lags[0] == 0 || lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!("lags must be strictly increasing and positive: {lags:?}")));
        }
        Ok(Self { lags, difference_first })
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().expect("validated non-empty")
    }
}

/// Sample autocorrelations `ρ_1..=ρ_k`.
fn acf(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (1..=k)
        .map(|lag| {
            let c: f64 = x[lag..].iter().zip(x).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / n;
            c / c0
        })
        .collect()
}

/// Partial autocorrelations `π_1..=π_k` by the Durbin–Levinson recursion.
pub fn pacf(x: &[f64], k: usize) -> Vec<f64> {
    pacf_from_acf(&acf(x, k))
}

fn pacf_from_acf(rho: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(rho.len());
    let mut out = Vec::with_capacity(rho.len());
    for m in 0..rho.len() {
        let num = rho[m] - (0..m).map(|j| phi[j] * rho[m - 1 - j]).sum::<f64>();
        let den = 1.0 - (0..m).map(|j| phi[j] * rho[j]).sum::<f64>();
        let pm = num / den;
        let prev = phi.clone();
        for j in 0..m {
            phi[j] = prev[j] - pm * prev[m - 1 - j];
        }
        phi.push(pm);
        out.push(pm);
    }
    out
}

/// Keeps lag 1 plus every lag up to `max_lag` whose partial autocorrelation
/// leaves the 95% band `±1.96/√n`. The series is differenced first when an
/// ADF test cannot reject a unit root.
pub fn select_lags(series: &[f64], max_lag: usize) -> Result<LagSpec> {
    ensure_finite(series)?;
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be >= 1".into()));
    }
    if series.len() <= 3 * max_lag {
        return Err(Error::TooShort { len: series.len(), min: 3 * max_lag + 1 });
    }
    // A degenerate regression (constant input) counts as stationary.
    let difference_first = match adf_test(series, default_adf_lag(series.len()).min(max_lag)) {
        Ok(r) => !r.reject_unit_root,
        Err(_) => false,
    };
    let working: Vec<f64> = if difference_first {
        series.windows(2).map(|w| w[1] - w[0]).collect()
    } else {
        series.to_vec()
    };
    let n = working.len();
    let mean = working.iter().sum::<f64>() / n as f64;
    let spread = working.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let mut lags = vec![1];
    if spread > 1e-12 * mean.abs().max(1e-300) {
        let band = 1.96 / (n as f64).sqrt();
        let limit = (series.len() / 2).saturating_sub(1).max(1);
        for (i, p) in pacf(&working, max_lag).into_iter().enumerate() {
            let lag = i + 1;
            if lag > 1 && lag <= limit && p.is_finite() && p.abs() > band {
                lags.push(lag);
            }
        }
    }
    LagSpec::new(lags, difference_first)
}
