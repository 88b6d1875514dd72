//! Augmented Dickey–Fuller unit-root test (regression with constant).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    /// t-statistic of the lagged level coefficient.
    pub statistic: f64,
    /// 5% critical value for the number of regression observations.
    pub critical_value: f64,
    pub lags: usize,
    pub n_obs: usize,
    /// `true` when the unit-root null is rejected at 5%, i.e. the series looks stationary.
    pub reject_unit_root: bool,
}

/// `floor((n − 1)^{1/3})`, the customary default augmentation order.
pub fn default_adf_lag(n: usize) -> usize {
    ((n.saturating_sub(1)) as f64).cbrt().floor() as usize
}

/// MacKinnon (2010) response surface, constant-only model, 5% level.
fn critical_value_5pct(n_obs: usize) -> f64 {
    let t = n_obs as f64;
    -2.86154 - 2.8903 / t - 4.234 / (t * t) - 40.040 / (t * t * t)
}

/// Regresses `Δy_t` on a constant, `y_{t−1}` and `max_lag` lagged differences.
pub fn adf_test(series: &[f64], max_lag: usize) -> Result<AdfResult> {
    ensure_finite(series)?;
    let n = series.len();
    let k = max_lag;
    let cols = k + 2;
    if n < k + 3 || n - 1 - k <= cols {
        return Err(Error::TooShort { len: n, min: k + cols + 2 });
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let rows = dy.len() - k;

    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for (row, t) in (k..dy.len()).enumerate() {
        y[row] = dy[t];
        x[(row, 0)] = 1.0;
        x[(row, 1)] = series[t];
        for i in 1..=k {
            x[(row, 1 + i)] = dy[t - i];
        }
    }

    let level = x.column(1);
    let level_mean = level.mean();
    let level_spread = level.iter().map(|v| (v - level_mean).abs()).fold(0.0, f64::max);
    if level_spread <= 1e-12 * level_mean.abs().max(1e-300) {
        return Err(Error::Degenerate("constant series in ADF regression".into()));
    }

    let xtx = x.transpose() * &x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Degenerate("singular ADF design matrix".into()))?;
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &beta;
    let dof = rows - cols;
    let s2 = resid.norm_squared() / dof as f64;
    let scale = y.norm_squared() / rows as f64;
    if !(s2 > 1e-24 * scale.max(1e-300)) {
        return Err(Error::Degenerate("perfect fit in ADF regression".into()));
    }
    let inv = chol.inverse();
    let se = (s2 * inv[(1, 1)]).sqrt();
    let statistic = beta[1] / se;
    if !statistic.is_finite() {
        return Err(Error::Degenerate("non-finite ADF statistic".into()));
    }
    let critical_value = critical_value_5pct(rows);
    Ok(AdfResult {
        statistic,
        critical_value,
        lags: k,
        n_obs: rows,
        reject_unit_root: statistic < critical_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::seeded_rng(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn white_noise_rejects() {
        for seed in 0..5 {
            let x = noise(seed, 200);
            let r = adf_test(&x, default_adf_lag(200)).unwrap();
            assert!(r.reject_unit_root, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn random_walk_fails_to_reject() {
        for seed in 0..5 {
            let mut level = 0.0;
            let walk: Vec<f64> = noise(100 + seed, 200)
                .into_iter()
                .map(|e| {
                    level += e;
                    level
                })
                .collect();
            let r = adf_test(&walk, default_adf_lag(200)).unwrap();
            assert!(!r.reject_unit_root, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn constant_is_degenerate() {
        assert!(matches!(adf_test(&[3.0; 50], 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_short() {
        assert!(matches!(adf_test(&[1.0, 2.0, 0.5], 1), Err(Error::TooShort { .. })));
    }

    #[test]
    fn critical_value_large_sample_limit() {
        assert!((critical_value_5pct(1_000_000) + 2.86154).abs() < 1e-5);
        assert_eq!(default_adf_lag(200), 5);
    }
}
