//! Piecewise-linear covariates built from reference traces, and discrete
//! Fréchet distances for screening which traces belong to one family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{median, DegradationTrace};

/// Points on the normalised time axis used for covariates (0..=99).
pub const GRID_POINTS: usize = 100;
pub const BLOCKS: usize = 5;
const BLOCK_LEN: usize = GRID_POINTS / BLOCKS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
    pub start: f64,
    pub end: f64,
}

/// Five least-squares lines, one per 20% block of the normalised time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearCovariate {
    pub source_id: String,
    pub segments: Vec<Segment>,
}

impl PiecewiseLinearCovariate {
    /// Value at normalised time `k ∈ [0, 99]` (clamped).
    pub fn evaluate(&self, k: f64) -> f64 {
        let k = k.clamp(0.0, (GRID_POINTS - 1) as f64);
        let i = ((k / BLOCK_LEN as f64).floor() as usize).min(self.segments.len() - 1);
        let s = &self.segments[i];
        s.slope * k + s.intercept
    }

    pub fn grid_values(&self) -> Vec<f64> {
        (0..GRID_POINTS).map(|k| self.evaluate(k as f64)).collect()
    }
}

/// Linear interpolation of the trace onto `points` equally spaced times.
pub fn resample(trace: &DegradationTrace, points: usize) -> Vec<f64> {
    let (t, v) = (trace.times(), trace.values());
    if t.len() == 1 || points < 2 {
        return vec![v[0]; points];
    }
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let mut j = 0;
    (0..points)
        .map(|k| {
            let x = t0 + (t1 - t0) * k as f64 / (points - 1) as f64;
            while j + 2 < t.len() && t[j + 1] < x {
                j += 1;
            }
            let w = ((x - t[j]) / (t[j + 1] - t[j])).clamp(0.0, 1.0);
            v[j] + w * (v[j + 1] - v[j])
        })
        .collect()
}

fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn piecewise_linearize(trace: &DegradationTrace) -> Result<PiecewiseLinearCovariate> {
    if trace.len() < 10 {
        return Err(Error::TooShort { len: trace.len(), min: 10 });
    }
    let grid = resample(trace, GRID_POINTS);
    let segments = (0..BLOCKS)
        .map(|i| {
            let lo = i * BLOCK_LEN;
            let xs: Vec<f64> = (lo..lo + BLOCK_LEN).map(|k| k as f64).collect();
            let (slope, intercept) = ols_line(&xs, &grid[lo..lo + BLOCK_LEN]);
            let end = if i + 1 == BLOCKS { (GRID_POINTS - 1) as f64 } else { (lo + BLOCK_LEN) as f64 };
            Segment { slope, intercept, start: lo as f64, end }
        })
        .collect();
    Ok(PiecewiseLinearCovariate { source_id: trace.id().to_string(), segments })
}

/// Min-max normalised piecewise-linear channels, one per reference trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateChannels {
    pub covariates: Vec<PiecewiseLinearCovariate>,
    /// `(min, max)` of each channel over the grid.
    pub ranges: Vec<(f64, f64)>,
}

impl CovariateChannels {
    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    /// Normalised channel values at relative position `u ∈ [0, 1]` of a trace.
    pub fn at(&self, u: f64) -> Vec<f64> {
        let k = u.clamp(0.0, 1.0) * (GRID_POINTS - 1) as f64;
        self.covariates
            .iter()
            .zip(&self.ranges)
            .map(|(c, &(lo, hi))| normalize(c.evaluate(k), lo, hi))
            .collect()
    }

    /// The `100 × channels` matrix, row per grid point.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..GRID_POINTS).map(|k| self.at(k as f64 / (GRID_POINTS - 1) as f64)).collect()
    }
}

fn normalize(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn covariate_channels(references: &[DegradationTrace]) -> Result<CovariateChannels> {
    if references.is_empty() {
        return Err(Error::InvalidParameter("at least one reference trace is required".into()));
    }
    let covariates = references.iter().map(piecewise_linearize).collect::<Result<Vec<_>>>()?;
    let ranges = covariates
        .iter()
        .map(|c| {
            c.grid_values()
                .into_iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect();
    Ok(CovariateChannels { covariates, ranges })
}

fn chebyshev(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Discrete Fréchet distance between polylines of `(time, value)` points
/// under the Chebyshev ground metric.
pub fn frechet_distance_points(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            let d = chebyshev(pa, pb);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

fn unit_time(values: &[f64]) -> Vec<(f64, f64)> {
    let n = values.len();
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| (if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 }, v))
        .collect()
}

/// Fréchet distance between two value sequences, each placed on its own
/// time axis normalised to `[0, 1]`.
pub fn frechet_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    frechet_distance_points(&unit_time(a), &unit_time(b))
}

/// Fréchet distance between traces after resampling both onto a common
/// normalised time grid with as many points as the longer trace.
pub fn frechet_traces(a: &DegradationTrace, b: &DegradationTrace) -> Result<f64> {
    let n = a.len().max(b.len());
    frechet_distance(&resample(a, n), &resample(b, n))
}

/// Symmetric matrix of pairwise trace distances.
pub fn distance_matrix(traces: &[DegradationTrace]) -> Result<Vec<Vec<f64>>> {
    let n = traces.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = frechet_traces(&traces[i], &traces[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySelection {
    pub retained: Vec<String>,
    pub dropped: Vec<String>,
    pub distances: Vec<Vec<f64>>,
    /// Each trace's median distance to the others.
    pub typical_distance: Vec<f64>,
    pub cutoff: f64,
}

/// Drops traces whose median distance to the others exceeds
/// `cutoff_multiplier` times the median of those per-trace medians.
pub fn select_family(traces: &[DegradationTrace], cutoff_multiplier: f64) -> Result<FamilySelection> {
    if traces.len() < 3 {
        return Err(Error::TooShort { len: traces.len(), min: 3 });
    }
    if !(cutoff_multiplier > 0.0) {
        return Err(Error::InvalidParameter("cutoff multiplier must be > 0".into()));
    }
    let distances = distance_matrix(traces)?;
    let typical: Vec<f64> = distances
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let others: Vec<f64> = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
            median(&others)
        })
        .collect();
    let cutoff = cutoff_multiplier * median(&typical);
    let (mut retained, mut dropped) = (Vec::new(), Vec::new());
    for (trace, &d) in traces.iter().zip(&typical) {
        if d > cutoff {
            dropped.push(trace.id().to_string());
        } else {
            retained.push(trace.id().to_string());
        }
    }
    Ok(FamilySelection { retained, dropped, distances, typical_distance: typical, cutoff })
}
