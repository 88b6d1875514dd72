//! Walk-forward evaluation: fit, forecast one step, concatenate, refit, then advance.

use serde::{Deserialize, Serialize};

use agecast_core::DegradationTrace;

use crate::engine::Forecaster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitMode {
    /// Refit after every concatenated pseudo-observation.
    #[default]
    Literal,
    /// One fit per block, forecasting all of its steps at once. Not the
    /// published protocol.
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForward {
    /// Index of the first predicted point.
    pub start: usize,
    /// One prediction per trace point from `start` on.
    pub predictions: Vec<f64>,
    /// Fit-advance rounds (blocks).
    pub rounds: usize,
    pub fits: usize,
}

impl WalkForward {
    pub fn actuals<'a>(&self, trace: &'a DegradationTrace) -> &'a [f64] {
        &trace.values()[self.start..]
    }
}

/// Runs the walk-forward evaluation from `p` initial training points with
/// blocks of `n` steps. Each block starts from the true data prefix; the last
/// block is cut at the end of the trace.
pub fn walk_forward<F: Forecaster + ?Sized>(
    model: &mut F,
    trace: &DegradationTrace,
    p: usize,
    n: usize,
    mode: RefitMode,
) -> Result<WalkForward> {
    let len = trace.len();
    if p == 0 || p >= len {
        return Err(Error::Config(format!("initial training count {p} must lie in 1..{len}")));
    }
    if n == 0 {
        return Err(Error::Config("steps ahead must be >= 1".into()));
    }
    let (times, values) = (trace.times(), trace.values());
    let mut predictions = Vec::with_capacity(len - p);
    let (mut start, mut rounds, mut fits) = (p, 0, 0);
    while start < len {
        let steps = n.min(len - start);
        let fail = |index: usize| move |e: Error| Error::Fit { index, source: Box::new(e) };
        match mode {
            RefitMode::Literal => {
                let mut work = values[..start].to_vec();
                for _ in 0..steps {
                    let m = work.len();
                    let f = model.fit_forecast(&times[..m], &work, 1).map_err(fail(m))?;
                    fits += 1;
                    let y = f.point[0];
                    work.push(y);
                    predictions.push(y);
                }
            }
            RefitMode::Fast => {
                let f = model.fit_forecast(&times[..start], &values[..start], steps).map_err(fail(start))?;
                fits += 1;
                predictions.extend_from_slice(&f.point[..steps]);
            }
        }
        if let Some(i) = predictions.iter().position(|v| !v.is_finite()) {
            return Err(Error::Fit {
                index: p + i,
                source: Box::new(agecast_core::Error::NonFinite { index: p + i }.into()),
            });
        }
        rounds += 1;
        start += steps;
    }
    Ok(WalkForward { start: p, predictions, rounds, fits })
}
