//! Extreme learning machine: frozen random sigmoid features with an
//! L1-penalised linear read-out.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Design, LagSpec, Normalizer, OneStepModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElmConfig {
    pub hidden_count: usize,
    pub l1_penalty: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ElmConfig {
    fn default() -> Self {
        Self { hidden_count: 20, l1_penalty: 1e-3, tolerance: 1e-8, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmForecaster {
    pub lag_spec: LagSpec,
    pub hidden_count: usize,
    /// Row-major `hidden_count × lags`, drawn once and never trained.
    pub input_weights: Vec<f64>,
    pub input_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub intercept: f64,
    pub l1_penalty: f64,
    pub normalizer: Normalizer,
}

impl ElmForecaster {
    fn features(&self, lagged: &[f64], out: &mut [f64]) {
        hidden_features(&self.input_weights, &self.input_bias, lagged, out);
    }
}

fn hidden_features(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let l = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * l..(j + 1) * l];
        *o = sigmoid(b[j] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>());
    }
}

impl OneStepModel for ElmForecaster {
    fn lag_spec(&self) -> &LagSpec {
        &self.lag_spec
    }

    fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    fn predict_normalized(&self, lagged: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden_count];
        self.features(lagged, &mut h);
        self.intercept + h.iter().zip(&self.output_weights).map(|(a, w)| a * w).sum::<f64>()
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimises `1/(2n)·‖y − b − Xw‖² + λ‖w‖₁` by cyclic coordinate descent.
/// Returns `(w, b)`. With `λ = 0` the least-squares solution is computed
/// directly and a rank-deficient design is an error.
pub fn lasso(x: &DMatrix<f64>, y: &[f64], lambda: f64, tolerance: f64, max_sweeps: usize) -> Result<(Vec<f64>, f64)> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter("l1 penalty must be >= 0".into()));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let col_means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let mut xc = x.clone();
    for j in 0..p {
        xc.column_mut(j).add_scalar_mut(-col_means[j]);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let w: Vec<f64> = if lambda == 0.0 {
        let svd = xc.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if n < p || !(smax > 0.0) || smin <= 1e-10 * smax {
            return Err(Error::Singular("ELM design matrix is rank deficient".into()));
        }
        let sol = svd.solve(&yc, 0.0).map_err(|e| Error::Singular(e.to_string()))?;
        sol.iter().copied().collect()
    } else {
        let nf = n as f64;
        let norms: Vec<f64> = (0..p).map(|j| xc.column(j).norm_squared() / nf).collect();
        let mut w = vec![0.0; p];
        let mut resid = yc.clone();
        for _ in 0..max_sweeps {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                if norms[j] == 0.0 {
                    continue;
                }
                let col = xc.column(j);
                let rho = col.dot(&resid) / nf + norms[j] * w[j];
                let new = soft_threshold(rho, lambda) / norms[j];
                let delta = new - w[j];
                if delta != 0.0 {
                    resid.axpy(-delta, &col, 1.0);
                    w[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < tolerance {
                break;
            }
        }
        w
    };
    let intercept = y_mean - w.iter().zip(&col_means).map(|(a, m)| a * m).sum::<f64>();
    Ok((w, intercept))
}

/// Trains an ELM on one or more series sharing a lag structure (pooled rows,
/// pooled normalisation).
pub fn train_elm_multi(series: &[&[f64]], lag_spec: &LagSpec, config: &ElmConfig, seed: u64) -> Result<ElmForecaster> {
    if config.hidden_count == 0 {
        return Err(Error::InvalidParameter("hidden count must be >= 1".into()));
    }
    let design = Design::build(series, lag_spec)?;
    let l = lag_spec.lags.len();
    let hc = config.hidden_count;
    let mut rng = crate::seeded_rng(seed);
    let input_weights: Vec<f64> = (0..hc * l).map(|_| rng.random_range(-1.0..1.0)).collect();
    let input_bias: Vec<f64> = (0..hc).map(|_| rng.random_range(-1.0..1.0)).collect();

    let n = design.rows.len();
    let mut h = DMatrix::zeros(n, hc);
    let mut buf = vec![0.0; hc];
    for (i, row) in design.rows.iter().enumerate() {
        hidden_features(&input_weights, &input_bias, row, &mut buf);
        for j in 0..hc {
            h[(i, j)] = buf[j];
        }
    }
    let (output_weights, intercept) =
        lasso(&h, &design.targets, config.l1_penalty, config.tolerance, config.max_sweeps)?;
    Ok(ElmForecaster {
        lag_spec: lag_spec.clone(),
        hidden_count: hc,
        input_weights,
        input_bias,
        output_weights,
        intercept,
        l1_penalty: config.l1_penalty,
        normalizer: design.normalizer,
    })
}

pub fn train_elm(
    series: &[f64],
    lag_spec: &LagSpec,
    hidden_count: usize,
    l1_penalty: f64,
    seed: u64,
) -> Result<ElmForecaster> {
    let config = ElmConfig { hidden_count, l1_penalty, ..Default::default() };
    train_elm_multi(&[series], lag_spec, &config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::forecast_recursive;
    use crate::series::mape;

    fn sine(n: usize) -> Vec<f64> {
        (0..n).map(|t| (0.37 * t as f64).sin() + 0.1 * (1.3 * t as f64).cos()).collect()
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let y = sine(80);
        let spec = LagSpec::new(vec![1, 2, 3], false).unwrap();
        let m = train_elm(&y, &spec, 6, 0.0, 4).unwrap();

        // Independent solve of the normal equations with an explicit intercept column.
        let design = Design::build(&[&y], &spec).unwrap();
        let n = design.rows.len();
        let mut a = DMatrix::zeros(n, 7);
        let mut buf = vec![0.0; 6];
        for (i, row) in design.rows.iter().enumerate() {
            hidden_features(&m.input_weights, &m.input_bias, row, &mut buf);
            a[(i, 0)] = 1.0;
            for j in 0..6 {
                a[(i, j + 1)] = buf[j];
            }
        }
        let t = DVector::from_vec(design.targets.clone());
        let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * t)).unwrap();
        assert!((sol[0] - m.intercept).abs() < 1e-8);
        for j in 0..6 {
            assert!((sol[j + 1] - m.output_weights[j]).abs() < 1e-8, "{} vs {}", sol[j + 1], m.output_weights[j]);
        }
    }

    #[test]
    fn huge_penalty_shrinks_to_intercept() {
        let y = sine(60);
        let spec = LagSpec::new(vec![1, 2], false).unwrap();
        let m = train_elm(&y, &spec, 10, 1e6, 4).unwrap();
        assert!(m.output_weights.iter().all(|w| *w == 0.0));
        let design = Design::build(&[&y], &spec).unwrap();
        let mean_target = design.targets.iter().sum::<f64>() / design.targets.len() as f64;
        assert!((m.intercept - mean_target).abs() < 1e-12);
        assert!((m.predict_normalized(&[0.3, -2.0]) - m.intercept).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_without_penalty() {
        // More hidden units than rows cannot be solved by plain least squares.
        let y = sine(8);
        let spec = LagSpec::new(vec![1], false).unwrap();
        assert!(matches!(train_elm(&y, &spec, 20, 0.0, 1), Err(Error::Singular(_))));
        assert!(train_elm(&y, &spec, 20, 1e-3, 1).is_ok());
    }

    #[test]
    fn input_weights_are_frozen_draws() {
        let y = sine(50);
        let spec = LagSpec::new(vec![1, 2], false).unwrap();
        let a = train_elm(&y, &spec, 5, 1e-3, 77).unwrap();
        let b = train_elm(&y[..30], &spec, 5, 1e-2, 77).unwrap();
        assert_eq!(a.input_weights, b.input_weights);
        assert!(a.input_weights.iter().all(|w| (-1.0..1.0).contains(w)));
    }

    #[test]
    fn lasso_matches_closed_form_single_feature() {
        // One centred feature: w = S(x·y/n, λ) / (x·x/n).
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = [2.0, 2.5, 4.5, 5.0];
        let (w, b) = lasso(&x, &y, 0.1, 1e-12, 100).unwrap();
        let (xc, yc) = ([-1.5, -0.5, 0.5, 1.5], [-1.5, -1.0, 1.0, 1.5]);
        let xy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / 4.0;
        let xx: f64 = xc.iter().map(|a| a * a).sum::<f64>() / 4.0;
        let expect = (xy - 0.1) / xx;
        assert!((w[0] - expect).abs() < 1e-12);
        assert!((b - (3.5 - expect * 2.5)).abs() < 1e-12);
    }

    #[test]
    fn exponential_capacity() {
        let y: Vec<f64> = (0..100).map(|t| 0.01 * ((0.03 * t as f64).exp() - 1.0)).collect();
        let spec = LagSpec::new(vec![1, 2], true).unwrap();
        let m = train_elm(&y[..70], &spec, 20, 1e-3, 2).unwrap();
        let preds: Vec<f64> = (70..100).map(|k| forecast_recursive(&m, &y[..k], 1).unwrap().point[0]).collect();
        let err = mape(&y[70..], &preds).unwrap();
        assert!(err < 2.0, "mape {err}");
    }
}
