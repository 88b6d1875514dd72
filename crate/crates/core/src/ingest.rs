//! Raw switching telemetry to ΔR_DS_ON traces, plus synthetic generators.
//!
//! The pipeline is: segment ON states by gate voltage, compute one R_DS_ON
//! value per ON window, drop windows measured below the flange temperature
//! cutoff, average per aggregation window (minutes) and subtract the pristine
//! value so the trace starts at zero.

use std::io::Read;
use std::ops::RangeInclusive;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::DegradationTrace;

/// One telemetry sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    /// Seconds since the start of the test.
    #[serde(rename = "t_s")]
    pub t: f64,
    pub v_gs: f64,
    pub v_ds: f64,
    pub i_d: f64,
    /// Flange (case) temperature in °C.
    pub t_f: f64,
}

impl RawRecord {
    fn is_finite(&self) -> bool {
        [self.t, self.v_gs, self.v_ds, self.i_d, self.t_f].iter().all(|v| v.is_finite())
    }
}

/// Reads raw telemetry in the `t_s,v_gs,v_ds,i_d,t_f` CSV layout.
pub fn read_raw_csv(reader: impl Read) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let rec: RawRecord = row?;
        if !rec.is_finite() {
            return Err(Error::NonFinite { index: out.len() });
        }
        if let Some(prev) = out.last().map(|r: &RawRecord| r.t) {
            if rec.t < prev {
                return Err(Error::NonIncreasingTime { index: out.len() });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    read_raw_csv(std::fs::File::open(path)?)
}

pub fn write_raw_csv(records: &[RawRecord], writer: impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for rec in records {
        wtr.serialize(rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Gate-source voltage at or above which a sample counts as ON.
    pub gate_on_threshold: f64,
    /// ON windows with mean flange temperature below this are discarded.
    /// The source experiments never state the value, so it is off by default.
    pub low_temp: Option<f64>,
    /// Aggregation bin width in minutes.
    pub aggregation_window: f64,
    pub min_on_samples: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { gate_on_threshold: 7.5, low_temp: None, aggregation_window: 1.0, min_on_samples: 1 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_on_threshold > 0.0) {
            return Err(Error::InvalidParameter("gate_on_threshold must be > 0".into()));
        }
        if !(self.aggregation_window > 0.0) {
            return Err(Error::InvalidParameter("aggregation_window must be > 0".into()));
        }
        if self.min_on_samples == 0 {
            return Err(Error::InvalidParameter("min_on_samples must be >= 1".into()));
        }
        if matches!(self.low_temp, Some(v) if !v.is_finite()) {
            return Err(Error::InvalidParameter("low_temp must be finite".into()));
        }
        Ok(())
    }
}

/// Maximal runs of samples with `v_gs >= gate_on_threshold`, keeping only runs
/// of at least `min_on_samples` samples.
pub fn segment_on_states(
    records: &[RawRecord],
    config: &PreprocessConfig,
) -> Result<Vec<RangeInclusive<usize>>> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let mut runs = Vec::new();
    let mut start = None;
    for (i, rec) in records.iter().enumerate() {
        let on = rec.v_gs >= config.gate_on_threshold;
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push(s..=i - 1);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(s..=records.len() - 1);
    }
    runs.retain(|r| r.end() - r.start() + 1 >= config.min_on_samples);
    if runs.is_empty() {
        return Err(Error::NoOnWindows);
    }
    Ok(runs)
}

/// Mean of the per-sample ratios `v_ds / i_d` over an ON window.
pub fn compute_rdson(window: &[RawRecord]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let mut total = 0.0;
    for (index, rec) in window.iter().enumerate() {
        if rec.i_d == 0.0 {
            return Err(Error::ZeroCurrent { index });
        }
        total += rec.v_ds / rec.i_d;
    }
    let r = total / window.len() as f64;
    if !r.is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(r)
}

/// Runs the full preprocessing pipeline. The returned trace has id `"trace"`;
/// callers usually rename it with [`DegradationTrace::with_id`].
pub fn preprocess(records: &[RawRecord], config: &PreprocessConfig) -> Result<DegradationTrace> {
    let windows = segment_on_states(records, config)?;

    // (time in minutes, R_DS_ON) per retained ON window.
    let mut samples = Vec::with_capacity(windows.len());
    for range in windows {
        let window = &records[range];
        let r = compute_rdson(window)?;
        let n = window.len() as f64;
        let t_mean = window.iter().map(|w| w.t).sum::<f64>() / n;
        let tf_mean = window.iter().map(|w| w.t_f).sum::<f64>() / n;
        if matches!(config.low_temp, Some(cut) if tf_mean < cut) {
            continue;
        }
        samples.push((t_mean / 60.0, r));
    }
    if samples.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut current_bin = None;
    let (mut t_sum, mut r_sum, mut count) = (0.0, 0.0, 0usize);
    for (t, r) in samples {
        let bin = (t / config.aggregation_window).floor() as i64;
        if current_bin.is_some_and(|b| b != bin) {
            times.push(t_sum / count as f64);
            values.push(r_sum / count as f64);
            (t_sum, r_sum, count) = (0.0, 0.0, 0);
        }
        current_bin = Some(bin);
        t_sum += t;
        r_sum += r;
        count += 1;
    }
    times.push(t_sum / count as f64);
    values.push(r_sum / count as f64);

    let pristine = values[0];
    for v in &mut values {
        *v -= pristine;
    }
    DegradationTrace::new("trace", times, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub alpha: f64,
    /// Growth rate per minute.
    pub beta: f64,
    /// Pristine on-resistance in ohms, used by the raw generator.
    #[serde(default = "default_r_init")]
    pub r_init: f64,
    /// Length of the trace in minutes.
    pub duration: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sampling interval of [`synthesize_trace`] in minutes.
    #[serde(default = "default_interval")]
    pub interval: f64,
}

fn default_r_init() -> f64 {
    0.05
}

fn default_interval() -> f64 {
    1.0
}

impl SynthConfig {
    pub fn new(alpha: f64, beta: f64, duration: f64) -> Self {
        Self {
            alpha,
            beta,
            r_init: default_r_init(),
            duration,
            noise_sigma: 0.0,
            seed: 0,
            interval: default_interval(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.r_init, self.duration, self.noise_sigma, self.interval]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("synthetic config must be finite".into()));
        }
        if !(self.duration > 0.0) || !(self.interval > 0.0) {
            return Err(Error::InvalidParameter("duration and interval must be > 0".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParameter("noise_sigma must be >= 0".into()));
        }
        if self.r_init < 0.0 {
            return Err(Error::InvalidParameter("r_init must be >= 0".into()));
        }
        Ok(())
    }

    /// Noise-free ΔR at time `t` minutes.
    pub fn delta_r(&self, t: f64) -> f64 {
        self.alpha * (self.beta * t).exp_m1()
    }
}

/// Samples `α(e^{βt} − 1) + ε` on `0, interval, …, duration` minutes.
pub fn synthesize_trace(config: &SynthConfig) -> Result<DegradationTrace> {
    config.validate()?;
    let n = (config.duration / config.interval + 1e-9).floor() as usize + 1;
    let mut rng = crate::seeded_rng(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * config.interval;
        let eps = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        times.push(t);
        values.push(config.delta_r(t) + eps);
    }
    DegradationTrace::new(format!("synth-{}", config.seed), times, values)
}

/// PWM drive and sampling parameters for [`synthesize_raw`].
///
/// A continuous 1 kHz capture is far too dense to simulate for hours, so the
/// generator records short bursts of `cycles_per_burst` PWM periods every
/// `burst_interval_s` seconds, like a triggered acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveConfig {
    pub gate_voltage: f64,
    pub frequency_hz: f64,
    pub duty_cycle: f64,
    pub drain_bias: f64,
    pub load_resistance: f64,
    pub samples_per_period: usize,
    pub cycles_per_burst: usize,
    pub burst_interval_s: f64,
    pub flange_temp: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            gate_voltage: 15.0,
            frequency_hz: 1000.0,
            duty_cycle: 0.4,
            drain_bias: 4.0,
            load_resistance: 0.2,
            samples_per_period: 10,
            cycles_per_burst: 2,
            burst_interval_s: 10.0,
            flange_temp: 100.0,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gate_voltage,
            self.frequency_hz,
            self.drain_bias,
            self.load_resistance,
            self.burst_interval_s,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.samples_per_period == 0 || self.cycles_per_burst == 0 {
            return Err(Error::InvalidParameter("drive parameters must be positive".into()));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return Err(Error::InvalidParameter("duty cycle must lie in (0, 1)".into()));
        }
        if !self.flange_temp.is_finite() {
            return Err(Error::InvalidParameter("flange_temp must be finite".into()));
        }
        let period = 1.0 / self.frequency_hz;
        if self.cycles_per_burst as f64 * period >= self.burst_interval_s {
            return Err(Error::InvalidParameter("bursts overlap: burst_interval_s too short".into()));
        }
        Ok(())
    }

    /// ON time of one PWM period in seconds.
    pub fn on_time(&self) -> f64 {
        self.duty_cycle / self.frequency_hz
    }
}

/// Generates PWM telemetry whose on-resistance follows `R_init + α(e^{βt} − 1)`.
///
/// Measurement noise, when requested, perturbs the resistance of each ON
/// window (not each sample), so window means stay unbiased.
pub fn synthesize_raw(config: &SynthConfig, drive: &DriveConfig) -> Result<Vec<RawRecord>> {
    config.validate()?;
    drive.validate()?;
    let period = 1.0 / drive.frequency_hz;
    let dt = period / drive.samples_per_period as f64;
    let on_samples = ((drive.duty_cycle * drive.samples_per_period as f64).round() as usize)
        .clamp(1, drive.samples_per_period - 1);
    let duration_s = config.duration * 60.0;
    let bursts = (duration_s / drive.burst_interval_s + 1e-9).floor() as usize + 1;

    let mut rng = crate::seeded_rng(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out = Vec::with_capacity(bursts * drive.cycles_per_burst * drive.samples_per_period);
    for b in 0..bursts {
        let t0 = b as f64 * drive.burst_interval_s;
        for c in 0..drive.cycles_per_burst {
            let tc = t0 + c as f64 * period;
            let eps = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            for s in 0..drive.samples_per_period {
                let t = tc + s as f64 * dt;
                let rec = if s < on_samples {
                    let r = config.r_init + config.delta_r(t / 60.0) + eps;
                    let i_d = drive.drain_bias / (drive.load_resistance + r);
                    RawRecord { t, v_gs: drive.gate_voltage, v_ds: i_d * r, i_d, t_f: drive.flange_temp }
                } else {
                    RawRecord { t, v_gs: 0.0, v_ds: drive.drain_bias, i_d: 0.0, t_f: drive.flange_temp }
                };
                out.push(rec);
            }
        }
    }
    Ok(out)
}
