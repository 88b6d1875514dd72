//! Non-seasonal ARIMA(p, d, q) with exact Gaussian likelihood and a stepwise
//! AIC order search.
//!
//! The differenced series `w` follows `(w_t − μ) = Σ φ_i (w_{t−i} − μ) + e_t +
//! Σ θ_j e_{t−j}`, so the regression constant is `c = μ(1 − Σ φ_i)`. The
//! likelihood is evaluated with a Kalman filter on the Harvey state-space
//! form, initialised from the stationary covariance. Coefficients are
//! optimised through partial autocorrelations squashed by `tanh`, which keeps
//! every candidate stationary and invertible.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::adf::{adf_test, default_adf_lag};
use super::{difference, mean, std_dev};
use crate::error::{ensure_finite, Error, Result};
use crate::optim::{bfgs, nelder_mead};
use crate::series::ForecastResult;

/// Largest partial autocorrelation magnitude accepted at the optimum.
const PACF_LIMIT: f64 = 0.995;
const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub with_constant: bool,
    /// Regression constant `c = μ(1 − Σφ)`.
    pub c: f64,
    /// Mean `μ` of the differenced process.
    pub mean: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    /// Number of observations after differencing.
    pub n_obs: usize,
}

impl ArimaModel {
    /// Builds a model from known coefficients (no likelihood information).
    pub fn from_coefficients(d: usize, c: f64, phi: Vec<f64>, theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        let ar_sum: f64 = phi.iter().sum();
        if (1.0 - ar_sum).abs() < 1e-12 {
            return Err(Error::NonStationary);
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter("sigma2 must be > 0".into()));
        }
        Ok(Self {
            p: phi.len(),
            d,
            q: theta.len(),
            with_constant: c != 0.0,
            c,
            mean: c / (1.0 - ar_sum),
            phi,
            theta,
            sigma2,
            loglik: f64::NAN,
            aic: f64::NAN,
            n_obs: 0,
        })
    }

    pub fn order(&self) -> (usize, usize, usize) {
        (self.p, self.d, self.q)
    }
}

/// Maps unconstrained values to the coefficients of a stationary AR
/// polynomial via partial autocorrelations (Durbin–Levinson recursion).
fn pacf_to_coefficients(u: &[f64]) -> Vec<f64> {
    let mut coef: Vec<f64> = Vec::with_capacity(u.len());
    for (k, &raw) in u.iter().enumerate() {
        let r = raw.tanh();
        let prev = coef.clone();
        for j in 0..k {
            coef[j] = prev[j] - r * prev[k - 1 - j];
        }
        coef.push(r);
    }
    coef
}

/// State-space matrices of the centred ARMA process in Harvey's form.
struct StateSpace {
    r: usize,
    /// Row-major transition.
    t: Vec<f64>,
    /// Disturbance loading `[1, θ_1, …]`.
    g: Vec<f64>,
    p0: Vec<f64>,
}

impl StateSpace {
    fn new(phi: &[f64], theta: &[f64]) -> Result<Self> {
        let r = phi.len().max(theta.len() + 1);
        let mut t = vec![0.0; r * r];
        for (i, &f) in phi.iter().enumerate() {
            t[i * r] = f;
        }
        for i in 0..r - 1 {
            t[i * r + i + 1] = 1.0;
        }
        let mut g = vec![0.0; r];
        g[0] = 1.0;
        for (j, &th) in theta.iter().enumerate() {
            g[j + 1] = th;
        }

        // Stationary covariance: vec(P) = (I − T⊗T)⁻¹ vec(g gᵀ).
        let tm = DMatrix::from_row_slice(r, r, &t);
        let kron = tm.kronecker(&tm);
        let lhs = DMatrix::identity(r * r, r * r) - kron;
        let rhs = nalgebra::DVector::from_iterator(r * r, (0..r * r).map(|idx| g[idx / r] * g[idx % r]));
        let sol = lhs.lu().solve(&rhs).ok_or(Error::NonStationary)?;
        let p0 = sol.iter().copied().collect();
        Ok(Self { r, t, g, p0 })
    }

    /// Runs the filter on the centred data. Returns the sum of standardised
    /// squared innovations, the log-determinant term and the one-step-ahead
    /// predicted state after the last observation.
    fn filter(&self, x: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let r = self.r;
        let mut a = vec![0.0; r];
        let mut p = self.p0.clone();
        let (mut ssq, mut logdet) = (0.0, 0.0);
        let mut k = vec![0.0; r];
        let mut tp = vec![0.0; r * r];
        for &obs in x {
            let f = p[0];
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::Singular("ARIMA innovation variance".into()));
            }
            let v = obs - a[0];
            ssq += v * v / f;
            logdet += f.ln();
            for i in 0..r {
                k[i] = p[i * r] / f;
            }
            // Measurement update.
            for i in 0..r {
                a[i] += k[i] * v;
            }
            for i in 0..r {
                for j in 0..r {
                    p[i * r + j] -= k[i] * k[j] * f;
                }
            }
            // Time update: a = T a, P = T P Tᵀ + g gᵀ.
            let a_new: Vec<f64> = (0..r).map(|i| (0..r).map(|j| self.t[i * r + j] * a[j]).sum()).collect();
            a = a_new;
            for i in 0..r {
                for j in 0..r {
                    tp[i * r + j] = (0..r).map(|l| self.t[i * r + l] * p[l * r + j]).sum();
                }
            }
            for i in 0..r {
                for j in 0..r {
                    p[i * r + j] = (0..r).map(|l| tp[i * r + l] * self.t[j * r + l]).sum::<f64>()
                        + self.g[i] * self.g[j];
                }
            }
        }
        Ok((ssq, logdet, a))
    }
}

/// Concentrated Gaussian log-likelihood and innovation variance.
fn concentrated_loglik(x: &[f64], phi: &[f64], theta: &[f64]) -> Result<(f64, f64)> {
    let ss = StateSpace::new(phi, theta)?;
    let (ssq, logdet, _) = ss.filter(x)?;
    let n = x.len() as f64;
    let sigma2 = ssq / n;
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate("zero innovation variance".into()));
    }
    let ll = -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) - 0.5 * logdet;
    Ok((ll, sigma2))
}

fn css(x: &[f64], phi: &[f64], theta: &[f64]) -> f64 {
    let p = phi.len();
    let mut e = vec![0.0; x.len()];
    let mut total = 0.0;
    for t in p..x.len() {
        let mut pred = 0.0;
        for (i, f) in phi.iter().enumerate() {
            pred += f * x[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = x[t] - pred;
        total += e[t] * e[t];
    }
    total
}

struct Layout {
    p: usize,
    q: usize,
    with_constant: bool,
}

impl Layout {
    fn len(&self) -> usize {
        self.p + self.q + usize::from(self.with_constant)
    }

    /// (μ, φ, θ, largest |pacf|) from an unconstrained parameter vector.
    fn unpack(&self, v: &[f64]) -> (f64, Vec<f64>, Vec<f64>, f64) {
        let off = usize::from(self.with_constant);
        let mu = if self.with_constant { v[0] } else { 0.0 };
        let u_ar = &v[off..off + self.p];
        let u_ma = &v[off + self.p..];
        let phi = pacf_to_coefficients(u_ar);
        let theta: Vec<f64> = pacf_to_coefficients(u_ma).into_iter().map(|c| -c).collect();
        let largest = u_ar.iter().chain(u_ma).map(|u| u.tanh().abs()).fold(0.0, f64::max);
        (mu, phi, theta, largest)
    }
}

/// Fits ARIMA(p, d, q) by exact maximum likelihood (CSS warm start).
pub fn arima_fit(series: &[f64], p: usize, d: usize, q: usize, with_constant: bool) -> Result<ArimaModel> {
    ensure_finite(series)?;
    if series.len() <= p + q + d + 2 {
        return Err(Error::TooShort { len: series.len(), min: p + q + d + 3 });
    }
    let w = difference(series, d);
    let n = w.len();

    // Work on a standardised copy; the fit is equivariant under this map.
    let shift = if with_constant { mean(&w) } else { 0.0 };
    let sd = std_dev(&w);
    let scale = if sd > 1e-300 {
        sd
    } else if !with_constant && shift == 0.0 && w.iter().any(|v| *v != 0.0) {
        w.iter().map(|v| v.abs()).fold(0.0, f64::max)
    } else {
        return Err(Error::Degenerate("differenced series is constant".into()));
    };
    let z: Vec<f64> = w.iter().map(|v| (v - shift) / scale).collect();

    let layout = Layout { p, q, with_constant };
    let k = layout.len();
    let centred = |mu: f64| -> Vec<f64> { z.iter().map(|v| v - mu).collect() };
    let neg_ll = |v: &[f64]| -> f64 {
        let (mu, phi, theta, _) = layout.unpack(v);
        match concentrated_loglik(&centred(mu), &phi, &theta) {
            Ok((ll, _)) => -ll,
            Err(_) => f64::INFINITY,
        }
    };

    let best = if k == 0 {
        Vec::new()
    } else {
        let css_obj = |v: &[f64]| {
            let (mu, phi, theta, _) = layout.unpack(v);
            css(&centred(mu), &phi, &theta)
        };
        let steps: Vec<f64> = (0..k).map(|i| if with_constant && i == 0 { 0.1 } else { 0.3 }).collect();
        let start = nelder_mead(css_obj, &vec![0.0; k], &steps, 2000, 1e-12)?.x;
        let mut candidates = vec![start.clone()];
        match bfgs(neg_ll, &start, 300) {
            Ok(m) => candidates.push(m.x),
            Err(_) => {
                if let Ok(m) = nelder_mead(neg_ll, &start, &steps, 4000, 1e-12) {
                    candidates.push(m.x);
                }
            }
        }
        candidates
            .into_iter()
            .map(|v| (neg_ll(&v), v))
            .filter(|(f, _)| f.is_finite())
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, v)| v)
            .ok_or_else(|| Error::NonConvergence(format!("ARIMA({p},{d},{q})")))?
    };

    let (mu_z, phi, theta, largest) = layout.unpack(&best);
    if largest > PACF_LIMIT {
        return Err(Error::NonStationary);
    }
    let (ll_z, sigma2_z) = concentrated_loglik(&centred(mu_z), &phi, &theta)?;
    let mu = if with_constant { shift + scale * mu_z } else { 0.0 };
    let loglik = ll_z - n as f64 * scale.ln();
    let sigma2 = sigma2_z * scale * scale;
    let n_params = p + q + usize::from(with_constant) + 1;
    let ar_sum: f64 = phi.iter().sum();
    if !(loglik.is_finite() && sigma2 > 0.0) {
        return Err(Error::NonConvergence(format!("ARIMA({p},{d},{q})")));
    }
    Ok(ArimaModel {
        p,
        d,
        q,
        with_constant,
        c: mu * (1.0 - ar_sum),
        mean: mu,
        phi,
        theta,
        sigma2,
        loglik,
        aic: -2.0 * loglik + 2.0 * n_params as f64,
        n_obs: n,
    })
}

/// Chooses `d` by repeated ADF tests, then runs a stepwise AIC search over
/// `(p, q)` and the constant term.
pub fn auto_arima(series: &[f64]) -> Result<ArimaModel> {
    ensure_finite(series)?;
    if series.len() < 10 {
        return Err(Error::TooShort { len: series.len(), min: 10 });
    }
    let mut d = 0;
    while d < 2 {
        let w = difference(series, d);
        match adf_test(&w, default_adf_lag(w.len())) {
            Ok(r) if !r.reject_unit_root => d += 1,
            // Rejected, constant or too short: stop differencing.
            _ => break,
        }
    }
    let allow_constant = d <= 1;

    let mut cache: BTreeMap<(usize, usize, bool), Option<ArimaModel>> = BTreeMap::new();
    let mut fit = |p: usize, q: usize, c: bool| -> Option<ArimaModel> {
        cache
            .entry((p, q, c))
            .or_insert_with(|| arima_fit(series, p, d, q, c).ok())
            .clone()
    };

    let mut best: Option<ArimaModel> = None;
    let consider = |m: Option<ArimaModel>, best: &mut Option<ArimaModel>| -> bool {
        match (m, best.as_ref()) {
            (Some(m), None) => {
                *best = Some(m);
                true
            }
            (Some(m), Some(b)) if m.aic < b.aic => {
                *best = Some(m);
                true
            }
            _ => false,
        }
    };
    for (p, q) in [(2, 2), (0, 0), (1, 0), (0, 1)] {
        consider(fit(p, q, allow_constant), &mut best);
    }
    if allow_constant {
        consider(fit(0, 0, false), &mut best);
    }

    loop {
        let Some(current) = best.clone() else { break };
        let (p, q, c) = (current.p, current.q, current.with_constant);
        let mut moves = Vec::new();
        if p > 0 {
            moves.push((p - 1, q, c));
        }
        if p < MAX_ORDER {
            moves.push((p + 1, q, c));
        }
        if q > 0 {
            moves.push((p, q - 1, c));
        }
        if q < MAX_ORDER {
            moves.push((p, q + 1, c));
        }
        if allow_constant {
            moves.push((p, q, !c));
        }
        let mut improved = false;
        for (p2, q2, c2) in moves {
            if series.len() <= p2 + q2 + d + 2 {
                continue;
            }
            if consider(fit(p2, q2, c2), &mut best) {
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    best.ok_or(Error::AllCandidatesFailed)
}

/// `h`-step forecasts of the original (undifferenced) series.
pub fn arima_forecast(model: &ArimaModel, history: &[f64], h: usize) -> Result<ForecastResult> {
    ensure_finite(history)?;
    if h == 0 {
        return Err(Error::InvalidParameter("forecast horizon must be >= 1".into()));
    }
    if history.len() <= model.d {
        return Err(Error::TooShort { len: history.len(), min: model.d + 1 });
    }
    let w = difference(history, model.d);
    let x: Vec<f64> = w.iter().map(|v| v - model.mean).collect();
    let ss = StateSpace::new(&model.phi, &model.theta)?;
    let (_, _, mut a) = ss.filter(&x)?;
    let r = ss.r;
    let mut dw = Vec::with_capacity(h);
    for _ in 0..h {
        dw.push(model.mean + a[0]);
        a = (0..r).map(|i| (0..r).map(|j| ss.t[i * r + j] * a[j]).sum()).collect();
    }

    // Integrate back one differencing level at a time.
    let mut path = dw;
    for level in (0..model.d).rev() {
        let base = *difference(history, level).last().expect("non-empty after check");
        let mut acc = base;
        path = path
            .into_iter()
            .map(|step| {
                acc += step;
                acc
            })
            .collect();
    }
    if let Some(i) = path.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(ForecastResult::point(history.len() - 1, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::seeded_rng(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(phi: f64, seed: u64, n: usize) -> Vec<f64> {
        let e = noise(seed, n + 100);
        let mut y = 0.0;
        let mut out = Vec::with_capacity(n);
        for (t, e) in e.into_iter().enumerate() {
            y = phi * y + e;
            if t >= 100 {
                out.push(y);
            }
        }
        out
    }

    #[test]
    fn pacf_map_single_coefficient() {
        let c = pacf_to_coefficients(&[0.5f64.atanh()]);
        assert!((c[0] - 0.5).abs() < 1e-15);
        // AR(2) from pacf (r1, r2): φ1 = r1(1 − r2), φ2 = r2.
        let (r1, r2) = (0.4f64, -0.3f64);
        let c = pacf_to_coefficients(&[r1.atanh(), r2.atanh()]);
        assert!((c[0] - r1 * (1.0 - r2)).abs() < 1e-14 && (c[1] - r2).abs() < 1e-14);
    }

    #[test]
    fn stationary_covariance_of_ar1() {
        let ss = StateSpace::new(&[0.6], &[]).unwrap();
        assert!((ss.p0[0] - 1.0 / (1.0 - 0.36)).abs() < 1e-12);
    }

    #[test]
    fn white_noise_loglik_matches_closed_form() {
        let x = noise(4, 50);
        let (ll, s2) = concentrated_loglik(&x, &[], &[]).unwrap();
        let n = x.len() as f64;
        let s2_ref = x.iter().map(|v| v * v).sum::<f64>() / n;
        assert!((s2 - s2_ref).abs() < 1e-14);
        let ll_ref = -0.5 * n * ((2.0 * std::f64::consts::PI * s2_ref).ln() + 1.0);
        assert!((ll - ll_ref).abs() < 1e-10);
    }

    #[test]
    fn ar1_loglik_matches_exact_density() {
        // Exact AR(1) likelihood with σ² concentrated out.
        let x = ar1(0.5, 8, 30);
        let phi = 0.5;
        let (ll, s2) = concentrated_loglik(&x, &[phi], &[]).unwrap();
        let n = x.len() as f64;
        let mut ssq = x[0] * x[0] * (1.0 - phi * phi);
        for t in 1..x.len() {
            ssq += (x[t] - phi * x[t - 1]).powi(2);
        }
        let s2_ref = ssq / n;
        let ll_ref = -0.5 * n * ((2.0 * std::f64::consts::PI * s2_ref).ln() + 1.0) - 0.5 * (1.0 / (1.0 - phi * phi)).ln();
        assert!((s2 - s2_ref).abs() < 1e-12);
        assert!((ll - ll_ref).abs() < 1e-9);
    }

    #[test]
    fn ar1_estimate_in_range() {
        let y = ar1(0.7, 42, 500);
        let m = arima_fit(&y, 1, 0, 0, true).unwrap();
        assert!(m.phi[0] > 0.6 && m.phi[0] < 0.8, "{m:?}");
        assert!(m.sigma2 > 0.0);
    }

    #[test]
    fn mean_model_constant_is_sample_mean() {
        let y: Vec<f64> = noise(1, 100).into_iter().map(|e| 3.0 + e).collect();
        let m = arima_fit(&y, 0, 0, 0, true).unwrap();
        assert!((m.c - mean(&y)).abs() < 1e-6, "{} vs {}", m.c, mean(&y));
    }

    #[test]
    fn random_walk_forecast_is_flat() {
        let mut y: Vec<f64> = noise(2, 40).iter().scan(0.0, |s, e| { *s += e; Some(*s) }).collect();
        *y.last_mut().unwrap() = 5.0;
        let m = arima_fit(&y, 0, 1, 0, false).unwrap();
        let f = arima_forecast(&m, &y, 6).unwrap();
        assert!(f.point.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn ar1_forecast_by_hand() {
        let m = ArimaModel::from_coefficients(0, 0.0, vec![0.5], vec![], 1.0).unwrap();
        let f = arima_forecast(&m, &[1.0, -3.0, 8.0], 3).unwrap();
        for (a, b) in f.point.iter().zip([4.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ma1_forecast_reverts_after_one_step() {
        let m = ArimaModel::from_coefficients(0, 2.5, vec![], vec![0.4], 1.0).unwrap();
        let f = arima_forecast(&m, &noise(3, 30), 5).unwrap();
        assert!(f.point[1..].iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn auto_arima_white_noise() {
        let y = noise(11, 200);
        let m = auto_arima(&y).unwrap();
        assert_eq!(m.d, 0, "{m:?}");
        assert!(m.p + m.q <= 1, "{m:?}");
    }

    #[test]
    fn auto_arima_trend_differences() {
        let y: Vec<f64> = noise(12, 120).iter().enumerate().map(|(t, e)| 0.5 * t as f64 + 0.3 * e).collect();
        let m = auto_arima(&y).unwrap();
        assert!(m.d >= 1, "{m:?}");
    }

    #[test]
    fn auto_arima_guard_and_determinism() {
        assert!(matches!(auto_arima(&[1.0; 9]), Err(Error::TooShort { .. })));
        let y = ar1(0.5, 5, 80);
        assert_eq!(auto_arima(&y).unwrap(), auto_arima(&y).unwrap());
    }
}
