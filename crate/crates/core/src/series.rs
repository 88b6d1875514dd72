//! Degradation traces, forecast containers, train/test splitting and MAPE.
//!
//! Traces are timestamped ΔR_DS_ON series with times in minutes. Everything
//! here is an immutable value; operations return new traces.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// A timestamped ΔR_DS_ON series (minutes, ohms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace")]
pub struct DegradationTrace {
    id: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTrace {
    id: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawTrace> for DegradationTrace {
    type Error = Error;

    fn try_from(raw: RawTrace) -> Result<Self> {
        DegradationTrace::new(raw.id, raw.times, raw.values)
    }
}

impl DegradationTrace {
    /// Validates and builds a trace.
    pub fn new(id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch { left: times.len(), right: values.len() });
        }
        if values.is_empty() {
            return Err(Error::TooShort { len: 0, min: 1 });
        }
        ensure_finite(&times)?;
        ensure_finite(&values)?;
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonIncreasingTime { index: i + 1 });
        }
        Ok(Self { id: id.into(), times, values })
    }

    /// Builds a trace sampled every minute starting at t = 0.
    pub fn from_values(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self::new(id, times, values)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always `false` for a valid trace; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Returns a copy with a different identifier.
    pub fn with_id(&self, id: impl Into<String>) -> Self {
        Self { id: id.into(), ..self.clone() }
    }

    /// Median spacing between consecutive timestamps (1.0 for a single point).
    pub fn median_interval(&self) -> f64 {
        if self.times.len() < 2 {
            return 1.0;
        }
        let diffs: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        median(&diffs)
    }

    /// Reads the `time_min,delta_r_on` CSV format.
    pub fn read_csv(id: impl Into<String>, reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for row in rdr.deserialize() {
            let row: TraceRow = row?;
            times.push(row.time_min);
            values.push(row.delta_r_on);
        }
        Self::new(id, times, values)
    }

    /// Loads a trace CSV; the file stem becomes the trace id.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".to_string());
        let file = std::fs::File::open(path)?;
        Self::read_csv(id, file)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (&time_min, &delta_r_on) in self.times.iter().zip(&self.values) {
            wtr.serialize(TraceRow { time_min, delta_r_on })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    time_min: f64,
    delta_r_on: f64,
}

/// One quantile level with its per-step values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBand {
    pub q: f64,
    pub values: Vec<f64>,
}

/// Point forecasts plus optional quantile bands, one value per horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    /// Index of the last observed point in the history the forecast starts from.
    pub origin_index: usize,
    pub horizon: usize,
    pub point: Vec<f64>,
    /// Sorted by `q`; empty for point-only forecasters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quantiles: Vec<QuantileBand>,
}

impl ForecastResult {
    pub fn point(origin_index: usize, point: Vec<f64>) -> Self {
        Self { origin_index, horizon: point.len(), point, quantiles: Vec::new() }
    }

    /// Builds a forecast with quantile bands. Bands are sorted by level; their
    /// lengths must match the point forecast. Crossing quantiles are accepted
    /// and can be counted with [`ForecastResult::quantile_crossings`].
    pub fn with_quantiles(
        origin_index: usize,
        point: Vec<f64>,
        mut quantiles: Vec<QuantileBand>,
    ) -> Result<Self> {
        for band in &quantiles {
            if band.values.len() != point.len() {
                return Err(Error::LengthMismatch { left: band.values.len(), right: point.len() });
            }
            if !(band.q > 0.0 && band.q < 1.0) {
                return Err(Error::InvalidParameter(format!("quantile level {} outside (0,1)", band.q)));
            }
        }
        quantiles.sort_by(|a, b| a.q.total_cmp(&b.q));
        if quantiles.windows(2).any(|w| w[0].q == w[1].q) {
            return Err(Error::InvalidParameter("duplicate quantile level".into()));
        }
        Ok(Self { origin_index, horizon: point.len(), point, quantiles })
    }

    pub fn quantile(&self, q: f64) -> Option<&[f64]> {
        self.quantiles
            .iter()
            .find(|b| (b.q - q).abs() < 1e-12)
            .map(|b| b.values.as_slice())
    }

    /// Number of (step, adjacent level pair) positions where a higher quantile
    /// falls below a lower one.
    pub fn quantile_crossings(&self) -> usize {
        self.quantiles
            .windows(2)
            .map(|w| w[0].values.iter().zip(&w[1].values).filter(|(lo, hi)| hi < lo).count())
            .sum()
    }
}

/// Training fraction for a train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    train_fraction: f64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction {train_fraction} must lie in (0, 1)"
            )));
        }
        Ok(Self { train_fraction })
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction
    }

    /// Number of training points for a series of `len` points: floor, at least 1.
    pub fn train_len(&self, len: usize) -> usize {
        // The epsilon absorbs representation error such as 0.57 * 100 = 56.999...
        let n = (self.train_fraction * len as f64 + 1e-9).floor() as usize;
        n.max(1)
    }
}

/// Mean absolute percentage error, `100/N * sum |y - yhat| / |y|`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    if actual.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    ensure_finite(actual)?;
    ensure_finite(predicted)?;
    let mut total = 0.0;
    for (index, (&y, &yhat)) in actual.iter().zip(predicted).enumerate() {
        if y == 0.0 {
            return Err(Error::ZeroActual { index });
        }
        total += ((y - yhat) / y).abs();
    }
    Ok(100.0 * total / actual.len() as f64)
}

/// Splits a trace into a training head and a test tail.
pub fn split(trace: &DegradationTrace, spec: SplitSpec) -> Result<(DegradationTrace, DegradationTrace)> {
    let len = trace.len();
    let n = spec.train_len(len);
    if len < 2 || n >= len {
        return Err(Error::EmptySplit { fraction: spec.train_fraction, len });
    }
    let head = DegradationTrace {
        id: trace.id.clone(),
        times: trace.times[..n].to_vec(),
        values: trace.values[..n].to_vec(),
    };
    let tail = DegradationTrace {
        id: trace.id.clone(),
        times: trace.times[n..].to_vec(),
        values: trace.values[n..].to_vec(),
    };
    Ok((head, tail))
}

/// Joins two pieces of the same trace; `tail` must start after `head` ends.
pub fn concat(head: &DegradationTrace, tail: &DegradationTrace) -> Result<DegradationTrace> {
    let mut times = head.times.clone();
    times.extend_from_slice(&tail.times);
    let mut values = head.values.clone();
    values.extend_from_slice(&tail.values);
    DegradationTrace::new(head.id.clone(), times, values)
}

/// Appends values, extending timestamps by the trace's median sampling interval.
pub fn append_values(trace: &DegradationTrace, new_values: &[f64]) -> Result<DegradationTrace> {
    ensure_finite(new_values)?;
    if new_values.is_empty() {
        return Ok(trace.clone());
    }
    let dt = trace.median_interval();
    let last = *trace.times.last().expect("valid trace is non-empty");
    let mut times = trace.times.clone();
    let mut values = trace.values.clone();
    for (k, &v) in new_values.iter().enumerate() {
        times.push(last + dt * (k + 1) as f64);
        values.push(v);
    }
    DegradationTrace::new(trace.id.clone(), times, values)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
