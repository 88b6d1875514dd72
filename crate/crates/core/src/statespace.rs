//! Exponential degradation models in state-space form and the EKF/UKF
//! trackers built on them.
//!
//! The filters track the augmented state `[ΔR, α, β]`, with `α` and `β`
//! modelled as random walks. Two transitions are available:
//!
//! * [`Transition::Exponential`]: `r' = r(1 + β) + αβ`, the discretised
//!   derivative of `ΔR(t) = α(e^{βt} − 1)`.
//! * [`Transition::Pristine`]: `r' = r(1 + β) − r_init·β`, which anchors the
//!   growth to a known pristine level instead of `α`.

use nalgebra::{DMatrix, DVector, Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::series::{DegradationTrace, ForecastResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    /// `r(1+β) + αβ`
    A,
    /// `r(1+β) − r_init·β`
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub alpha: f64,
    /// Growth per sampling step.
    pub beta: f64,
    /// Pristine level, only used by [`Variant::B`].
    pub r_init: f64,
}

/// One step of the deterministic degradation recurrence.
pub fn model_step(r: f64, params: &DegradationParams, variant: Variant) -> Result<f64> {
    let DegradationParams { alpha, beta, r_init } = *params;
    let next = match variant {
        Variant::A => r * (1.0 + beta) + alpha * beta,
        Variant::B => r * (1.0 + beta) - r_init * beta,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Divergence(format!("model step from r={r} produced {next}")))
    }
}

/// State transition used by the filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transition {
    Exponential,
    Pristine { r_init: f64 },
}

impl Transition {
    pub fn variant(&self) -> Variant {
        match self {
            Transition::Exponential => Variant::A,
            Transition::Pristine { .. } => Variant::B,
        }
    }

    fn r_init(&self) -> f64 {
        match *self {
            Transition::Exponential => 0.0,
            Transition::Pristine { r_init } => r_init,
        }
    }

    /// Propagates the augmented state; α and β are carried unchanged.
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let (r, alpha, beta) = (x[0], x[1], x[2]);
        let next = match self {
            Transition::Exponential => r * (1.0 + beta) + alpha * beta,
            Transition::Pristine { r_init } => r * (1.0 + beta) - r_init * beta,
        };
        Vector3::new(next, alpha, beta)
    }

    /// Jacobian of [`Transition::apply`] at `x`.
    pub fn jacobian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let (r, alpha, beta) = (x[0], x[1], x[2]);
        let first = match self {
            Transition::Exponential => RowVector3::new(1.0 + beta, beta, r + alpha),
            Transition::Pristine { r_init } => RowVector3::new(1.0 + beta, 0.0, r - r_init),
        };
        let mut a = Matrix3::identity();
        a.set_row(0, &first);
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    /// Spread of the sigma points around the mean.
    pub a: f64,
    /// Prior knowledge of the distribution (2 is optimal for Gaussians).
    pub b: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self { a: 0.1, b: 2.0, kappa: 0.0 }
    }
}

impl UkfParams {
    pub fn lambda(&self, n: usize) -> f64 {
        self.a * self.a * (n as f64 + self.kappa) - n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub process_sigma: f64,
    pub measurement_sigma: f64,
    #[serde(default)]
    pub ukf: UkfParams,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { process_sigma: 0.002, measurement_sigma: 0.01, ukf: UkfParams::default() }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.process_sigma > 0.0) || !(self.measurement_sigma > 0.0) {
            return Err(Error::InvalidParameter("noise sigmas must be > 0".into()));
        }
        if !(self.ukf.a > 0.0) || !self.ukf.b.is_finite() || !self.ukf.kappa.is_finite() {
            return Err(Error::InvalidParameter("invalid UKF spread parameters".into()));
        }
        if !(3.0 + self.ukf.lambda(3) > 0.0) {
            return Err(Error::InvalidParameter("UKF requires n + lambda > 0".into()));
        }
        Ok(())
    }

    fn q(&self) -> Matrix3<f64> {
        Matrix3::identity() * self.process_sigma.powi(2)
    }

    fn r(&self) -> f64 {
        self.measurement_sigma.powi(2)
    }
}

/// Posterior mean and covariance of `[ΔR, α, β]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: Vector3<f64>,
    pub p: Matrix3<f64>,
    /// Index of the last observation absorbed (0 for the initial state).
    pub index: usize,
}

impl FilterState {
    pub fn new(x: Vector3<f64>, p: Matrix3<f64>) -> Self {
        Self { x, p, index: 0 }
    }

    pub fn delta_r(&self) -> f64 {
        self.x[0]
    }

    pub fn alpha(&self) -> f64 {
        self.x[1]
    }

    pub fn beta(&self) -> f64 {
        self.x[2]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.p.symmetric_eigenvalues().min()
    }
}

fn symmetrize(p: &Matrix3<f64>) -> Matrix3<f64> {
    (p + p.transpose()) * 0.5
}

fn check_state(x: &Vector3<f64>, p: &Matrix3<f64>) -> Result<()> {
    if x.iter().chain(p.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence("filter state became non-finite".into()))
    }
}

/// Extended Kalman filter predict + update for one measurement of ΔR.
pub fn ekf_step(
    state: &FilterState,
    z: f64,
    noise: &NoiseConfig,
    transition: &Transition,
) -> Result<FilterState> {
    let a = transition.jacobian(&state.x);
    let x_prior = transition.apply(&state.x);
    let p_prior = symmetrize(&(a * state.p * a.transpose() + noise.q()));

    // H = [1 0 0]
    let s = p_prior[(0, 0)] + noise.r();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Singular("EKF innovation covariance".into()));
    }
    let k: Vector3<f64> = p_prior.column(0) / s;
    let x = x_prior + k * (z - x_prior[0]);
    let mut h = RowVector3::zeros();
    h[0] = 1.0;
    let p = symmetrize(&((Matrix3::identity() - k * h) * p_prior));
    check_state(&x, &p)?;
    Ok(FilterState { x, p, index: state.index + 1 })
}

/// Lower-triangular `L` with `L Lᵀ = m`, allowing zero pivots so that
/// semidefinite matrices (including the zero matrix) have exact roots.
fn psd_cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let scale = m.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-14 * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            for i in j + 1..n {
                let mut v = m[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                if v.abs() > tol.sqrt() * scale.sqrt() {
                    return None;
                }
            }
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Some(l)
}

/// Matrix square root used for sigma points: Cholesky, retried with
/// `1e-12·I` jitter up to three times.
pub fn matrix_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut work = m.clone();
    for _ in 0..4 {
        if let Some(l) = psd_cholesky(&work) {
            return Ok(l);
        }
        work += DMatrix::identity(n, n) * 1e-12;
    }
    Err(Error::NotPositiveSemidefinite)
}

/// The `2n + 1` sigma points `x̄, x̄ ± (√((n+λ)P))_i`.
pub fn sigma_points(mean: &DVector<f64>, cov: &DMatrix<f64>, lambda: f64) -> Result<Vec<DVector<f64>>> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::LengthMismatch { left: cov.nrows(), right: n });
    }
    let root = matrix_sqrt(&(cov * (n as f64 + lambda)))?;
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(mean.clone());
    for i in 0..n {
        points.push(mean + root.column(i));
    }
    for i in 0..n {
        points.push(mean - root.column(i));
    }
    Ok(points)
}

/// Mean and covariance weights of the unscented transform.
pub fn unscented_weights(n: usize, params: &UkfParams) -> (Vec<f64>, Vec<f64>) {
    let lambda = params.lambda(n);
    let c = n as f64 + lambda;
    let mut wm = vec![0.5 / c; 2 * n + 1];
    let mut wc = wm.clone();
    wm[0] = lambda / c;
    wc[0] = lambda / c + (1.0 - params.a * params.a + params.b);
    (wm, wc)
}

fn to_dvec(x: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

fn to_dmat(p: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, p.as_slice())
}

fn to_vec3(x: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

/// Unscented Kalman filter predict + update for one measurement of ΔR.
pub fn ukf_step(
    state: &FilterState,
    z: f64,
    noise: &NoiseConfig,
    transition: &Transition,
) -> Result<FilterState> {
    let n = 3;
    let lambda = noise.ukf.lambda(n);
    let (wm, wc) = unscented_weights(n, &noise.ukf);

    let chi = sigma_points(&to_dvec(&state.x), &to_dmat(&state.p), lambda)?;
    let propagated: Vec<Vector3<f64>> = chi.iter().map(|p| transition.apply(&to_vec3(p))).collect();
    let x_prior: Vector3<f64> = propagated.iter().zip(&wm).map(|(y, w)| y * *w).sum();
    let mut p_prior = noise.q();
    for (y, w) in propagated.iter().zip(&wc) {
        let d = y - x_prior;
        p_prior += d * d.transpose() * *w;
    }
    let p_prior = symmetrize(&p_prior);

    // Fresh sigma points around the prior capture the added process noise.
    let chi = sigma_points(&to_dvec(&x_prior), &to_dmat(&p_prior), lambda)?;
    let zs: Vec<f64> = chi.iter().map(|p| p[0]).collect();
    let z_hat: f64 = zs.iter().zip(&wm).map(|(z, w)| z * w).sum();
    let mut s = noise.r();
    let mut pxz = Vector3::zeros();
    for ((p, zi), w) in chi.iter().zip(&zs).zip(&wc) {
        let dz = zi - z_hat;
        s += w * dz * dz;
        pxz += (to_vec3(p) - x_prior) * (w * dz);
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Singular("UKF innovation covariance".into()));
    }
    let k = pxz / s;
    let x = x_prior + k * (z - z_hat);
    let p = symmetrize(&(p_prior - k * k.transpose() * s));
    check_state(&x, &p)?;
    Ok(FilterState { x, p, index: state.index + 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    Ekf,
    Ukf,
}

pub fn filter_step(
    kind: FilterKind,
    state: &FilterState,
    z: f64,
    noise: &NoiseConfig,
    transition: &Transition,
) -> Result<FilterState> {
    match kind {
        FilterKind::Ekf => ekf_step(state, z, noise, transition),
        FilterKind::Ukf => ukf_step(state, z, noise, transition),
    }
}

/// Iterates the transition `n` times from the posterior mean with α, β frozen.
pub fn forecast_filter(state: &FilterState, n: usize, transition: &Transition) -> Result<ForecastResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("forecast horizon must be >= 1".into()));
    }
    let params = DegradationParams { alpha: state.alpha(), beta: state.beta(), r_init: transition.r_init() };
    let mut r = state.delta_r();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r = model_step(r, &params, transition.variant())?;
        out.push(r);
    }
    Ok(ForecastResult::point(state.index, out))
}

/// Least-squares fit of `ΔR(t) = α(e^{βt} − 1)` on a training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialFit {
    pub alpha: f64,
    /// Continuous growth rate per minute.
    pub rate: f64,
    /// Median sampling interval of the training window in minutes.
    pub dt: f64,
    /// Euclidean norm of the residuals.
    pub residual_norm: f64,
}

impl InitialFit {
    /// Per-step β of the discrete recurrence, `e^{rate·dt} − 1`.
    pub fn step_beta(&self) -> f64 {
        (self.rate * self.dt).exp_m1()
    }

    pub fn params(&self, r_init: f64) -> DegradationParams {
        DegradationParams { alpha: self.alpha, beta: self.step_beta(), r_init }
    }
}

fn basis(rate: f64, t: f64) -> f64 {
    (rate * t).exp_m1()
}

/// Best α and the SSE for a fixed rate.
fn profile(times: &[f64], values: &[f64], rate: f64) -> (f64, f64) {
    let (mut gy, mut gg) = (0.0, 0.0);
    for (&t, &y) in times.iter().zip(values) {
        let g = basis(rate, t);
        gy += g * y;
        gg += g * g;
    }
    if !(gg > 0.0) || !gg.is_finite() {
        return (0.0, f64::INFINITY);
    }
    let alpha = gy / gg;
    let sse = times
        .iter()
        .zip(values)
        .map(|(&t, &y)| (y - alpha * basis(rate, t)).powi(2))
        .sum();
    (alpha, sse)
}

/// Fits α and the continuous rate by variable projection: α is solved in
/// closed form for each rate, the rate is found by grid search plus golden
/// section, and a Gauss–Newton pass polishes both jointly.
pub fn fit_initial_params(train: &DegradationTrace) -> Result<InitialFit> {
    let times = train.times();
    let values = train.values();
    if train.len() < 4 {
        return Err(Error::TooShort { len: train.len(), min: 4 });
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::Degenerate("training window has zero time span".into()));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-14 * hi.abs().max(lo.abs()).max(1e-300) {
        return Err(Error::Degenerate("constant training window, rate is unidentifiable".into()));
    }
    let t_max = times.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(span);

    let limit = 20.0 / t_max;
    let grid = 400;
    let rates: Vec<f64> = (0..=grid)
        .map(|i| -limit + 2.0 * limit * i as f64 / grid as f64)
        .filter(|r| r.abs() > 1e-9 * limit)
        .collect();
    let sses: Vec<f64> = rates.iter().map(|&r| profile(times, values, r).1).collect();
    let best = sses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::NonConvergence("empty rate grid".into()))?;
    let left = rates[best.saturating_sub(1)];
    let right = rates[(best + 1).min(rates.len() - 1)];
    let mut rate = golden_section(|r| profile(times, values, r).1, left, right, 1e-12 * limit);
    let (mut alpha, mut sse) = profile(times, values, rate);

    for _ in 0..50 {
        // Normal equations of the 2-parameter Gauss–Newton step.
        let (mut jtj, mut jtr) = (nalgebra::Matrix2::<f64>::zeros(), nalgebra::Vector2::<f64>::zeros());
        for (&t, &y) in times.iter().zip(values) {
            let g = basis(rate, t);
            let j = nalgebra::Vector2::new(g, alpha * t * (rate * t).exp());
            let res = y - alpha * g;
            jtj += j * j.transpose();
            jtr += j * res;
        }
        let Some(step) = jtj.lu().solve(&jtr) else { break };
        let mut scale = 1.0;
        let mut improved = false;
        while scale > 1e-6 {
            let (a2, r2) = (alpha + scale * step[0], rate + scale * step[1]);
            let sse2: f64 = times.iter().zip(values).map(|(&t, &y)| (y - a2 * basis(r2, t)).powi(2)).sum();
            if sse2.is_finite() && sse2 < sse {
                (alpha, rate, sse) = (a2, r2, sse2);
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved || step[1].abs() <= 1e-15 * rate.abs().max(1e-300) {
            break;
        }
    }
    if !(alpha.is_finite() && rate.is_finite() && sse.is_finite()) {
        return Err(Error::NonConvergence("exponential least squares".into()));
    }
    Ok(InitialFit { alpha, rate, dt: train.median_interval(), residual_norm: sse.sqrt() })
}

/// JSON-configurable filter setup: noise, optional initial state and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    #[serde(default = "default_process_sigma")]
    pub process_sigma: f64,
    #[serde(default = "default_measurement_sigma")]
    pub measurement_sigma: f64,
    #[serde(default)]
    pub ukf: UkfParams,
    /// `[dr, alpha, beta]`; fitted from the training window when absent.
    #[serde(default)]
    pub x0: Option<[f64; 3]>,
    /// Either 3 diagonal entries or 9 row-major entries.
    #[serde(default)]
    pub p0: Option<Vec<f64>>,
}

fn default_process_sigma() -> f64 {
    NoiseConfig::default().process_sigma
}

fn default_measurement_sigma() -> f64 {
    NoiseConfig::default().measurement_sigma
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            process_sigma: default_process_sigma(),
            measurement_sigma: default_measurement_sigma(),
            ukf: UkfParams::default(),
            x0: None,
            p0: None,
        }
    }
}

impl FilterConfig {
    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig { process_sigma: self.process_sigma, measurement_sigma: self.measurement_sigma, ukf: self.ukf }
    }

    /// Initial covariance; defaults to `diag(v², w², w²)`.
    pub fn initial_covariance(&self) -> Result<Matrix3<f64>> {
        match &self.p0 {
            None => Ok(Matrix3::from_diagonal(&Vector3::new(
                self.measurement_sigma.powi(2),
                self.process_sigma.powi(2),
                self.process_sigma.powi(2),
            ))),
            Some(d) if d.len() == 3 => Ok(Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2]))),
            Some(m) if m.len() == 9 => Ok(Matrix3::from_row_slice(m)),
            Some(other) => Err(Error::InvalidParameter(format!(
                "p0 must have 3 or 9 entries, got {}",
                other.len()
            ))),
        }
    }
}

/// Fits initial parameters on `train`, then runs the filter over every
/// observation after the first. The returned state sits at the last point.
pub fn track(
    train: &DegradationTrace,
    kind: FilterKind,
    variant: Variant,
    config: &FilterConfig,
) -> Result<(FilterState, Transition)> {
    let noise = config.noise();
    noise.validate()?;
    let values = train.values();
    let transition = match variant {
        Variant::A => Transition::Exponential,
        Variant::B => Transition::Pristine { r_init: values[0] },
    };
    let x0 = match config.x0 {
        Some(x) => Vector3::from(x),
        None => {
            let fit = fit_initial_params(train)?;
            Vector3::new(values[0], fit.alpha, fit.step_beta())
        }
    };
    let mut state = FilterState::new(x0, config.initial_covariance()?);
    for &z in &values[1..] {
        state = filter_step(kind, &state, z, &noise, &transition)?;
    }
    Ok((state, transition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synthesize_trace, SynthConfig};

    #[test]
    fn model_step_examples() {
        let p = DegradationParams { alpha: 0.5, beta: 0.1, r_init: 0.2 };
        assert!((model_step(1.0, &p, Variant::A).unwrap() - 1.15).abs() < 1e-12);
        assert!((model_step(1.0, &p, Variant::B).unwrap() - 1.08).abs() < 1e-12);
        let still = DegradationParams { beta: 0.0, ..p };
        assert_eq!(model_step(0.7, &still, Variant::A).unwrap(), 0.7);
        let huge = DegradationParams { alpha: f64::MAX, beta: f64::MAX, r_init: 0.0 };
        assert!(model_step(1.0, &huge, Variant::A).is_err());
    }

    #[test]
    fn variants_coincide_when_alpha_is_negative_pristine() {
        for beta in [-0.3, 0.001, 0.07, 1.5] {
            let r_init = 0.37;
            let a = DegradationParams { alpha: -r_init, beta, r_init };
            for r in [0.0, 0.2, 3.0] {
                let x = model_step(r, &a, Variant::A).unwrap();
                let y = model_step(r, &a, Variant::B).unwrap();
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = Vector3::new(0.3, 0.02, 0.05);
        for t in [Transition::Exponential, Transition::Pristine { r_init: 0.1 }] {
            let a = t.jacobian(&x);
            for j in 0..3 {
                let mut up = x;
                let mut down = x;
                up[j] += 1e-6;
                down[j] -= 1e-6;
                let col = (t.apply(&up) - t.apply(&down)) / 2e-6;
                for i in 0..3 {
                    assert!((a[(i, j)] - col[i]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn sigma_points_zero_covariance() {
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let pts = sigma_points(&mean, &DMatrix::zeros(3, 3), UkfParams::default().lambda(3)).unwrap();
        assert_eq!(pts.len(), 7);
        assert!(pts.iter().all(|p| p == &mean));
    }

    #[test]
    fn sigma_points_scalar_case() {
        let pts = sigma_points(&DVector::from_vec(vec![0.0]), &DMatrix::from_element(1, 1, 1.0), 2.0).unwrap();
        let s = 3f64.sqrt();
        assert_eq!(pts[0][0], 0.0);
        assert!((pts[1][0] - s).abs() < 1e-15 && (pts[2][0] + s).abs() < 1e-15);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(matrix_sqrt(&m), Err(Error::NotPositiveSemidefinite)));
    }

    #[test]
    fn weights_sum_to_one() {
        let (wm, _) = unscented_weights(3, &UkfParams::default());
        assert!((wm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn state() -> FilterState {
        FilterState::new(
            Vector3::new(0.1, 0.01, 0.02),
            Matrix3::from_diagonal(&Vector3::new(1e-4, 4e-6, 4e-6)),
        )
    }

    #[test]
    fn zero_innovation_keeps_prior_mean() {
        let noise = NoiseConfig::default();
        let t = Transition::Exponential;
        let s = state();
        let predicted = t.apply(&s.x);
        for step in [ekf_step, ukf_step] {
            let post = step(&s, predicted[0], &noise, &t).unwrap();
            assert!((post.x - predicted).amax() < 1e-12, "{:?}", post.x);
        }
    }

    #[test]
    fn huge_measurement_noise_ignores_measurement() {
        let noise = NoiseConfig { measurement_sigma: 1e8, ..Default::default() };
        let t = Transition::Exponential;
        let s = state();
        let predicted = t.apply(&s.x);
        let post = ekf_step(&s, 50.0, &noise, &t).unwrap();
        assert!((post.x - predicted).amax() < 1e-10);
    }

    #[test]
    fn forecast_definitions() {
        let t = Transition::Exponential;
        let mut s = state();
        let f = forecast_filter(&s, 1, &t).unwrap();
        assert_eq!(f.point[0], t.apply(&s.x)[0]);
        s.x[2] = 0.0;
        let f = forecast_filter(&s, 5, &t).unwrap();
        assert!(f.point.iter().all(|&v| v == s.x[0]));
        assert!(forecast_filter(&s, 0, &t).is_err());
    }

    #[test]
    fn fit_noise_free_recovers_parameters() {
        let trace = synthesize_trace(&SynthConfig::new(0.01, 0.05, 60.0)).unwrap();
        let fit = fit_initial_params(&trace).unwrap();
        assert!((fit.alpha / 0.01 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.rate / 0.05 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn fit_constant_is_degenerate() {
        let trace = DegradationTrace::from_values("c", vec![0.2; 10]).unwrap();
        assert!(matches!(fit_initial_params(&trace), Err(Error::Degenerate(_))));
    }

    #[test]
    fn forecast_continues_analytic_curve() {
        let cfg = SynthConfig::new(0.01, 0.05, 60.0);
        let trace = synthesize_trace(&cfg).unwrap();
        let (state, t) = track(&trace, FilterKind::Ukf, Variant::A, &FilterConfig::default()).unwrap();
        let f = forecast_filter(&state, 4, &t).unwrap();
        for (h, v) in f.point.iter().enumerate() {
            let truth = cfg.delta_r(60.0 + (h + 1) as f64);
            assert!((v / truth - 1.0).abs() < 0.005, "step {h}: {v} vs {truth}");
        }
    }

    #[test]
    fn covariance_stays_psd() {
        let trace = synthesize_trace(&SynthConfig { noise_sigma: 1e-3, seed: 3, ..SynthConfig::new(0.01, 0.05, 80.0) })
            .unwrap();
        for kind in [FilterKind::Ekf, FilterKind::Ukf] {
            let cfg = FilterConfig::default();
            let noise = cfg.noise();
            let t = Transition::Exponential;
            let fit = fit_initial_params(&trace).unwrap();
            let mut s = FilterState::new(
                Vector3::new(0.0, fit.alpha, fit.step_beta()),
                cfg.initial_covariance().unwrap(),
            );
            for &z in &trace.values()[1..] {
                s = filter_step(kind, &s, z, &noise, &t).unwrap();
                assert!((s.p - s.p.transpose()).amax() == 0.0);
                assert!(s.min_eigenvalue() >= -1e-9, "{kind:?}: {}", s.min_eigenvalue());
            }
        }
    }

    #[test]
    fn filter_config_json() {
        let cfg: FilterConfig = serde_json::from_str(
            r#"{"process_sigma":0.002,"measurement_sigma":0.01,"ukf":{"a":0.1,"b":2,"kappa":0},
                "x0":[0,0.01,0.05],"p0":[1e-4,1e-6,1e-6]}"#,
        )
        .unwrap();
        assert_eq!(cfg.x0, Some([0.0, 0.01, 0.05]));
        assert_eq!(cfg.initial_covariance().unwrap()[(1, 1)], 1e-6);
        let bad = FilterConfig { p0: Some(vec![1.0; 4]), ..Default::default() };
        assert!(bad.initial_covariance().is_err());
    }
}
