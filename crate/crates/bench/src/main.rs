use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use agecast_bench::engine::TftEngine;
use agecast_bench::error::{Error, Result};
use agecast_bench::loo::LooReport;
use agecast_bench::plots::{write_plot_data, Document};
use agecast_bench::rul::{rul_from_threshold, RulEstimate, DEFAULT_THRESHOLD};
use agecast_bench::sweep::loo_cells;
use agecast_bench::{loo_long_term, run_benchmark, sweep_architectures, BenchmarkConfig, ModelKind, ModelSettings, RefitMode};
use agecast_core::ingest::{load_raw, preprocess, synthesize_raw, synthesize_trace, write_raw_csv, DriveConfig, PreprocessConfig, SynthConfig};
use agecast_core::similarity::{covariate_channels, select_family, CovariateChannels};
use agecast_core::{DegradationTrace, ForecastResult};
use agecast_tft::model::Checkpoint;
use agecast_tft::TftModel;

#[derive(Parser)]
#[command(name = "agecast", version, about = "MOSFET ΔR_DS_ON degradation forecasting benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Directory for output files.
    #[arg(long, env = "AGECAST_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Raw telemetry CSV (t_s,v_gs,v_ds,i_d,t_f) to a trace CSV.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// PreprocessConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// SynthConfig JSON to a trace CSV, or to raw telemetry with --raw.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        raw: bool,
        /// DriveConfig JSON for --raw.
        #[arg(long)]
        drive: Option<PathBuf>,
    },
    /// Fits on the first part of a trace and forecasts ahead.
    Forecast {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        train_frac: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference traces for TFT-wCov covariates.
        #[arg(long, num_args = 1..)]
        references: Vec<PathBuf>,
        /// ModelSettings JSON.
        #[arg(long)]
        settings: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Also save the trained TFT here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Runs a BenchmarkConfig JSON; writes report.json and report.csv.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// One fit per block instead of the published refit-every-step protocol.
        #[arg(long)]
        fast: bool,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Leave-one-out long-term forecasting over a family of traces.
    Loo {
        #[arg(long, num_args = 2.., required = true)]
        family: Vec<PathBuf>,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        train_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fréchet screening cutoff multiplier (families of three or more).
        #[arg(long, default_value_t = 3.0)]
        cutoff: f64,
        #[arg(long)]
        no_screen: bool,
        #[arg(long)]
        settings: Option<PathBuf>,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Architecture win-count sweep over leave-one-out cells.
    Sweep {
        /// Preset letters, e.g. ABCDEFG.
        #[arg(long, default_value = "ABCDEFG")]
        presets: String,
        #[arg(long, num_args = 2.., required = true)]
        family: Vec<PathBuf>,
        #[arg(long, num_args = 1.., default_values_t = vec![0.3])]
        train_frac: Vec<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use piecewise-linear covariates from the training traces.
        #[arg(long)]
        covariates: bool,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Attention report of a saved TFT on a trace.
    Attention {
        #[arg(long)]
        model_checkpoint: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Number of leading points used as history (default: the whole trace).
        #[arg(long)]
        origin: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Report JSON to plot-data CSVs.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        dir: OutDir,
    },
}

/// A trained TFT plus the covariate channels it was trained with.
#[derive(Serialize, Deserialize)]
struct TftBundle {
    checkpoint: Checkpoint,
    channels: Option<CovariateChannels>,
    id: String,
}

#[derive(Serialize)]
struct ForecastOutput<'a> {
    model: ModelKind,
    trace: &'a str,
    train_fraction: f64,
    seed: u64,
    start: usize,
    forecast: &'a ForecastResult,
    rul: RulEstimate,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_trace(path: &Path) -> Result<DegradationTrace> {
    DegradationTrace::load(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn settings(path: &Option<PathBuf>) -> Result<ModelSettings> {
    path.as_deref().map_or_else(|| Ok(ModelSettings::default()), read_json)
}

/// Success, or the number of failed cells.
fn run(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Preprocess { input, out, config } => {
            let cfg: PreprocessConfig = config.as_deref().map_or_else(|| Ok(PreprocessConfig::default()), read_json)?;
            let records = load_raw(&input).map_err(|e| Error::Config(format!("{}: {e}", input.display())))?;
            preprocess(&records, &cfg)?.save(&out)?;
        }
        Command::Synth { config, out, raw, drive } => {
            let cfg: SynthConfig = read_json(&config)?;
            if raw {
                let drive: DriveConfig = drive.as_deref().map_or_else(|| Ok(DriveConfig::default()), read_json)?;
                write_raw_csv(&synthesize_raw(&cfg, &drive)?, std::fs::File::create(&out)?)?;
            } else {
                synthesize_trace(&cfg)?.save(&out)?;
            }
        }
        Command::Forecast { model, trace, train_frac, steps, seed, references, settings: s, threshold, checkpoint, out, dir } => {
            let trace = load_trace(&trace)?;
            let refs = references.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>>>()?;
            let settings = settings(&s)?;
            let p = agecast_core::SplitSpec::new(train_frac).map_err(|e| Error::Config(e.to_string()))?.train_len(trace.len());
            if steps == 0 {
                return Err(Error::Config("--steps must be >= 1".into()));
            }
            let history = trace.values()[..p].to_vec();
            let forecast = if model.is_tft() {
                let channels = if model == ModelKind::TftWcov {
                    if refs.is_empty() {
                        return Err(Error::Config("TFT-wCov needs --references".into()));
                    }
                    Some(covariate_channels(&refs)?)
                } else {
                    None
                };
                let cfg = settings.tft_config(seed).map_err(|e| Error::Config(e.to_string()))?;
                let engine = agecast_bench::engine::train_tft_engine(
                    std::slice::from_ref(&trace),
                    Some(p),
                    channels.clone(),
                    &cfg,
                    trace.id(),
                    trace.len(),
                )?;
                if let Some(path) = checkpoint {
                    let bundle = TftBundle { checkpoint: engine.model.checkpoint(), channels, id: trace.id().into() };
                    write_json(&path, &bundle)?;
                }
                engine.forecast(&history, steps)?
            } else {
                use agecast_bench::Forecaster;
                let mut engine = agecast_bench::Engine::prepare(model, &trace, p, seed, &settings, &refs)?;
                engine.fit_forecast(&trace.times()[..p], &history, steps)?
            };
            let output = ForecastOutput {
                model,
                trace: trace.id(),
                train_fraction: train_frac,
                seed,
                start: p,
                forecast: &forecast,
                rul: rul_from_threshold(&forecast, threshold),
            };
            write_json(&out.unwrap_or_else(|| dir.out_dir.join("forecast.json")), &output)?;
        }
        Command::Benchmark { config, fast, dir } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let mut cfg = BenchmarkConfig::from_json(&text).map_err(|e| Error::Config(e.to_string()))?;
            if fast {
                cfg.mode = RefitMode::Fast;
            }
            let base = config.parent().unwrap_or(Path::new("."));
            let report = run_benchmark(&cfg, base)?;
            std::fs::create_dir_all(&dir.out_dir)?;
            write_json(&dir.out_dir.join("report.json"), &report)?;
            report.write_csv(std::fs::File::create(dir.out_dir.join("report.csv"))?)?;
            return Ok(report.failures());
        }
        Command::Loo { family, model, train_frac, seed, cutoff, no_screen, settings: s, dir } => {
            let mut traces = family.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>>>()?;
            if traces.len() >= 3 && !no_screen {
                let sel = select_family(&traces, cutoff)?;
                traces.retain(|t| sel.retained.iter().any(|id| id == t.id()));
                for id in &sel.dropped {
                    eprintln!("dropped {id}: Fréchet distance above the family cutoff");
                }
            }
            let settings = settings(&s)?;
            let rows = loo_long_term(&traces, model, train_frac, seed, &settings)?;
            let hash = hex_hash(&(model, train_frac, seed, &settings));
            let report = LooReport::new(&traces, hash, rows);
            write_json(&dir.out_dir.join("loo.json"), &report)?;
            write_plot_data(&Document::Loo(report.clone()), &dir.out_dir)?;
            return Ok(report.failures());
        }
        Command::Sweep { presets, family, train_frac, epochs, seed, covariates, dir } => {
            let traces = family.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>>>()?;
            let letters: Vec<char> = presets.chars().filter(|c| !c.is_whitespace() && *c != ',').collect();
            let mut base = agecast_tft::TftConfig { seed, ..Default::default() };
            if let Some(e) = epochs {
                base.max_epochs = e;
            }
            let cells = loo_cells(&traces, &train_frac, covariates);
            let report = sweep_architectures(&letters, &cells, &base)?;
            write_json(&dir.out_dir.join("sweep.json"), &report)?;
            println!("winner {}", report.winner);
        }
        Command::Attention { model_checkpoint, trace, origin, out, dir } => {
            let trace = load_trace(&trace)?;
            let bundle: TftBundle = read_json(&model_checkpoint)?;
            let model = TftModel::from_checkpoint(bundle.checkpoint)?;
            let n = origin.unwrap_or(trace.len());
            if n == 0 || n > trace.len() {
                return Err(Error::Config(format!("origin must lie in 1..={}", trace.len())));
            }
            let engine = TftEngine { model, channels: bundle.channels, len: trace.len(), id: bundle.id };
            let report = engine.attention(&trace.values()[..n])?;
            write_json(&out.unwrap_or_else(|| dir.out_dir.join("attention.json")), &report)?;
        }
        Command::Report { input, dir } => {
            let doc: Document = read_json(&input)?;
            for path in write_plot_data(&doc, &dir.out_dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(0)
}

fn hex_hash(value: &impl Serialize) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("serializable")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{failed} cell(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
