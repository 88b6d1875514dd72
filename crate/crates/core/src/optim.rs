//! Small wrappers around `argmin` for closures over `&[f64]`.
//!
//! Gradients for BFGS are central finite differences, which is plenty for the
//! handful of coefficients the statistical models estimate.

use std::cell::{Cell, RefCell};

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::neldermead::NelderMead;
use argmin::solver::quasinewton::BFGS;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: u64,
}

/// Objective with an evaluation budget. argmin's inner line searches have no
/// iteration cap of their own, so running out of budget aborts the whole run
/// and the best point seen so far is used instead.
struct Objective<F> {
    f: F,
    budget: u64,
    evals: Cell<u64>,
    best: RefCell<Option<(f64, Vec<f64>)>>,
}

impl<F: Fn(&[f64]) -> f64> Objective<F> {
    fn new(f: F, budget: u64) -> Self {
        Self { f, budget, evals: Cell::new(0), best: RefCell::new(None) }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn tracked(&self, x: &[f64]) -> std::result::Result<f64, argmin::core::Error> {
        let n = self.evals.get() + 1;
        self.evals.set(n);
        if n > self.budget {
            return Err(argmin::core::Error::msg(BUDGET_EXHAUSTED));
        }
        let v = self.eval(x);
        let mut best = self.best.borrow_mut();
        if v.is_finite() && best.as_ref().map_or(true, |(b, _)| v < *b) {
            *best = Some((v, x.to_vec()));
        }
        Ok(v)
    }

    fn best_seen(&self) -> Option<Minimum> {
        self.best
            .borrow()
            .as_ref()
            .map(|(v, x)| Minimum { x: x.clone(), value: *v, iterations: 0 })
    }
}

const BUDGET_EXHAUSTED: &str = "objective evaluation budget exhausted";

/// Objective evaluations allowed per optimiser iteration.
const EVALS_PER_ITER: u64 = 200;

fn run_outcome<F: Fn(&[f64]) -> f64>(
    objective: &Objective<F>,
    err: argmin::core::Error,
) -> Result<Minimum> {
    if err.to_string().contains(BUDGET_EXHAUSTED) {
        objective
            .best_seen()
            .ok_or_else(|| Error::NonConvergence("optimiser found no finite objective value".into()))
    } else {
        Err(Error::NonConvergence(err.to_string()))
    }
}

impl<F: Fn(&[f64]) -> f64> CostFunction for &Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.tracked(x)
    }
}

impl<F: Fn(&[f64]) -> f64> Gradient for &Objective<F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let mut work = x.to_vec();
        let mut g = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let h = gradient_step(x[i]);
            work[i] = x[i] + h;
            let up = self.tracked(&work)?;
            work[i] = x[i] - h;
            let down = self.tracked(&work)?;
            work[i] = x[i];
            g.push((up - down) / (2.0 * h));
        }
        Ok(g)
    }
}

fn gradient_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1e-2)
}

/// Central-difference gradient with a step scaled to each coordinate.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = gradient_step(x[i]);
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Nelder–Mead from `x0` with an axis-aligned initial simplex of the given
/// per-coordinate `steps`.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_iters: u64,
    sd_tolerance: f64,
) -> Result<Minimum> {
    if x0.len() != steps.len() || x0.is_empty() {
        return Err(Error::LengthMismatch { left: x0.len(), right: steps.len() });
    }
    let mut simplex = vec![x0.to_vec()];
    for (i, &s) in steps.iter().enumerate() {
        let mut p = x0.to_vec();
        p[i] += s;
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(sd_tolerance)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let objective = Objective::new(f, max_iters.saturating_mul(EVALS_PER_ITER));
    let res = match Executor::new(&objective, solver).configure(|state| state.max_iters(max_iters)).run() {
        Ok(res) => res,
        Err(e) => return run_outcome(&objective, e),
    };
    let state = res.state();
    let x = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::NonConvergence("Nelder-Mead produced no parameters".into()))?;
    Ok(Minimum { x, value: state.get_best_cost(), iterations: state.get_iter() })
}

/// BFGS with a Moré–Thuente line search and numerical gradients.
pub fn bfgs(f: impl Fn(&[f64]) -> f64, x0: &[f64], max_iters: u64) -> Result<Minimum> {
    let n = x0.len();
    let eye: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let solver = BFGS::new(MoreThuenteLineSearch::new())
        .with_tolerance_grad(1e-8)
        .and_then(|s| s.with_tolerance_cost(1e-12))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let objective = Objective::new(f, max_iters.saturating_mul(EVALS_PER_ITER));
    let res = match Executor::new(&objective, solver)
        .configure(|state| state.param(x0.to_vec()).inv_hessian(eye).max_iters(max_iters))
        .run()
    {
        Ok(res) => res,
        Err(e) => return run_outcome(&objective, e),
    };
    let state = res.state();
    let x = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::NonConvergence("BFGS produced no parameters".into()))?;
    let value = state.get_best_cost();
    if !value.is_finite() {
        return Err(Error::NonConvergence("BFGS ended at a non-finite objective".into()));
    }
    Ok(Minimum { x, value, iterations: state.get_iter() })
}

/// Golden-section search for a minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], 5000, 1e-14).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn bfgs_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + x[0] * x[1];
        let m = bfgs(f, &[0.0, 0.0], 200).unwrap();
        // Stationary point of the quadratic solved by hand: 2(x-3)+y=0, 4(y+1)+x=0.
        let (x, y) = (28.0 / 7.0, -14.0 / 7.0);
        assert!((m.x[0] - x).abs() < 1e-5 && (m.x[1] - y).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn golden_parabola() {
        let x = golden_section(|x| (x - 0.3).powi(2), -2.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn gradient_of_cubic() {
        let g = central_gradient(|x| x[0].powi(3) + x[1], &[2.0, 5.0]);
        assert!((g[0] - 12.0).abs() < 1e-6 && (g[1] - 1.0).abs() < 1e-8);
    }
}
