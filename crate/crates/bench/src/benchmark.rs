//! Benchmark grid: every (trace, model, steps ahead, train fraction, seed)
//! cell is one walk-forward run.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use agecast_core::ingest::{synthesize_trace, SynthConfig};
use agecast_core::{mape, DegradationTrace, SplitSpec};
use agecast_tft::AttentionReport;

use crate::engine::{Engine, ModelKind, ModelSettings};
use crate::error::{Error, Result};
use crate::walk::{walk_forward, RefitMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    /// A `time_min,delta_r_on` CSV; the file stem is the trace id.
    Path(PathBuf),
    Synth(SynthConfig),
}

impl TraceSource {
    /// Relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<DegradationTrace> {
        Ok(match self {
            TraceSource::Path(p) => DegradationTrace::load(base.join(p))?,
            TraceSource::Synth(cfg) => synthesize_trace(cfg)?,
        })
    }
}

fn default_horizons() -> Vec<usize> {
    vec![1, 2, 4]
}

fn default_fractions() -> Vec<f64> {
    vec![0.3, 0.5, 0.7]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub traces: Vec<TraceSource>,
    pub models: Vec<ModelKind>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_fractions")]
    pub train_fractions: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mode: RefitMode,
    #[serde(default)]
    pub settings: ModelSettings,
    /// Record the TFT attention at each walk-forward origin.
    #[serde(default = "default_true")]
    pub attention: bool,
}

impl BenchmarkConfig {
    pub fn new(models: Vec<ModelKind>) -> Self {
        Self {
            traces: Vec::new(),
            models,
            horizons: default_horizons(),
            train_fractions: default_fractions(),
            seeds: default_seeds(),
            mode: RefitMode::Literal,
            settings: ModelSettings::default(),
            attention: true,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        fn unique<T: PartialEq>(what: &str, v: &[T]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("{what} must not be empty")));
            }
            for (i, x) in v.iter().enumerate() {
                if v[..i].contains(x) {
                    return Err(Error::Config(format!("{what} contains duplicates")));
                }
            }
            Ok(())
        }
        unique("models", &self.models)?;
        unique("horizons", &self.horizons)?;
        unique("train_fractions", &self.train_fractions)?;
        unique("seeds", &self.seeds)?;
        if self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be >= 1".into()));
        }
        for &f in &self.train_fractions {
            SplitSpec::new(f).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.models.iter().any(|m| m.is_tft()) {
            self.settings.tft_config(0).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Hash of the trace ids and values, so a report names the data it came from.
pub fn data_hash(traces: &[DegradationTrace]) -> String {
    let mut h = Sha256::new();
    for t in traces {
        h.update(t.id().as_bytes());
        h.update([0]);
        for (a, b) in t.times().iter().zip(t.values()) {
            h.update(a.to_le_bytes());
            h.update(b.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    pub version: String,
    pub config_hash: String,
    pub data_hash: String,
    pub mode: RefitMode,
    /// Present when the run deviates from the published protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Metadata {
    pub fn new(config_hash: String, data_hash: String, mode: RefitMode) -> Self {
        Self {
            generator: "agecast".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            data_hash,
            mode,
            note: (mode == RefitMode::Fast)
                .then(|| "fast mode: one fit per block instead of a refit after every step".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceData {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl From<&DegradationTrace> for TraceData {
    fn from(t: &DegradationTrace) -> Self {
        Self { id: t.id().to_string(), times: t.times().to_vec(), values: t.values().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test: String,
    pub model: ModelKind,
    pub n: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub mape: Option<f64>,
    pub runtime_seconds: f64,
    /// Index of the first prediction.
    pub start: usize,
    pub predictions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionArtifact {
    pub test: String,
    pub model: ModelKind,
    pub train_fraction: f64,
    pub seed: u64,
    pub report: AttentionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: Metadata,
    pub rows: Vec<ReportRow>,
    pub attention: Vec<AttentionArtifact>,
    pub traces: Vec<TraceData>,
}

impl BenchmarkReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Zeroes the wall-clock fields, leaving a pure function of data and config.
    pub fn without_runtime(&self) -> Self {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|row| row.runtime_seconds = 0.0);
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Mean MAPE over the successful rows matching `filter`.
    pub fn mean_mape(&self, filter: impl Fn(&ReportRow) -> bool) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| filter(r)).filter_map(|r| r.mape).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// One line per row: `test,model,n,train_fraction,seed,mape,runtime_seconds,error`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["test", "model", "n", "train_fraction", "seed", "mape", "runtime_seconds", "error"])?;
        for r in &self.rows {
            w.write_record([
                r.test.clone(),
                r.model.to_string(),
                r.n.to_string(),
                r.train_fraction.to_string(),
                r.seed.to_string(),
                r.mape.map(|m| m.to_string()).unwrap_or_default(),
                r.runtime_seconds.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_traces(config: &BenchmarkConfig, base: &Path) -> Result<Vec<DegradationTrace>> {
    let traces = config.traces.iter().map(|s| s.load(base)).collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    for t in &traces {
        if !seen.insert(t.id().to_string()) {
            return Err(Error::Config(format!("duplicate trace id {:?}", t.id())));
        }
    }
    Ok(traces)
}

/// Loads the configured traces (relative paths against `base`) and runs the grid.
pub fn run_benchmark(config: &BenchmarkConfig, base: &Path) -> Result<BenchmarkReport> {
    config.validate()?;
    let traces = load_traces(config, base)?;
    run_on_traces(config, &traces)
}

struct Prep {
    trace: usize,
    model: ModelKind,
    fraction: f64,
    seed: u64,
}

/// Runs the grid on already loaded traces; `config.traces` is ignored.
/// Cells fail individually; the run itself only fails on a bad config.
pub fn run_on_traces(config: &BenchmarkConfig, traces: &[DegradationTrace]) -> Result<BenchmarkReport> {
    config.validate()?;
    if traces.is_empty() {
        return Err(Error::Config("no traces".into()));
    }
    let mut preps = Vec::new();
    for trace in 0..traces.len() {
        for &model in &config.models {
            for &fraction in &config.train_fractions {
                for &seed in &config.seeds {
                    preps.push(Prep { trace, model, fraction, seed });
                }
            }
        }
    }
    // Model preparation (TFT training, ensemble sizing) is shared by every
    // horizon of the same walk-forward.
    let prepared: Vec<(Result<Engine>, f64)> = preps
        .par_iter()
        .map(|job| {
            let clock = Instant::now();
            let trace = &traces[job.trace];
            let p = SplitSpec::new(job.fraction).expect("validated").train_len(trace.len());
            let references: Vec<DegradationTrace> =
                traces.iter().enumerate().filter(|(i, _)| *i != job.trace).map(|(_, t)| t.clone()).collect();
            let engine = Engine::prepare(job.model, trace, p, job.seed, &config.settings, &references);
            (engine, clock.elapsed().as_secs_f64())
        })
        .collect();

    let cells: Vec<(usize, usize)> =
        (0..preps.len()).flat_map(|i| config.horizons.iter().map(move |&n| (i, n))).collect();
    let mut rows: Vec<(usize, ReportRow)> = cells
        .par_iter()
        .map(|&(i, n)| {
            let job = &preps[i];
            let trace = &traces[job.trace];
            let p = SplitSpec::new(job.fraction).expect("validated").train_len(trace.len());
            let (engine, prep_seconds) = &prepared[i];
            let clock = Instant::now();
            let outcome = match engine {
                Ok(engine) => {
                    let mut engine = engine.clone();
                    walk_forward(&mut engine, trace, p, n, config.mode)
                        .and_then(|w| Ok((mape(w.actuals(trace), &w.predictions)?, w.predictions)))
                        .map_err(|e| e.to_string())
                }
                Err(e) => Err(format!("model preparation failed: {e}")),
            };
            let runtime_seconds = prep_seconds + clock.elapsed().as_secs_f64();
            let (mape, predictions, error) = match outcome {
                Ok((m, preds)) => (Some(m), preds, None),
                Err(e) => (None, Vec::new(), Some(e)),
            };
            let row = ReportRow {
                test: trace.id().to_string(),
                model: job.model,
                n,
                train_fraction: job.fraction,
                seed: job.seed,
                mape,
                runtime_seconds,
                start: p,
                predictions,
                error,
            };
            (i, row)
        })
        .collect();
    // Rows ordered by trace, model, steps ahead, fraction, seed.
    rows.sort_by(|(ia, a), (ib, b)| {
        let (ja, jb) = (&preps[*ia], &preps[*ib]);
        (ja.trace, config.models.iter().position(|m| *m == ja.model), a.n, *ia)
            .cmp(&(jb.trace, config.models.iter().position(|m| *m == jb.model), b.n, *ib))
    });

    let mut attention = Vec::new();
    if config.attention {
        for (job, (engine, _)) in preps.iter().zip(&prepared) {
            let trace = &traces[job.trace];
            let p = SplitSpec::new(job.fraction).expect("validated").train_len(trace.len());
            if let Ok(engine) = engine {
                if let Some(report) = engine.attention(&trace.values()[..p]) {
                    attention.push(AttentionArtifact {
                        test: trace.id().to_string(),
                        model: job.model,
                        train_fraction: job.fraction,
                        seed: job.seed,
                        report,
                    });
                }
            }
        }
    }

    Ok(BenchmarkReport {
        metadata: Metadata::new(config.hash(), data_hash(traces), config.mode),
        rows: rows.into_iter().map(|(_, r)| r).collect(),
        attention,
        traces: traces.iter().map(TraceData::from).collect(),
    })
}
