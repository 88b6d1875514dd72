//! Plot-data CSVs from benchmark and leave-one-out reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmark::BenchmarkReport;
use crate::error::Result;
use crate::loo::LooReport;

/// Any report the `report` command understands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Document {
    Benchmark(BenchmarkReport),
    Loo(LooReport),
}

fn writer(dir: &Path, name: &str, written: &mut Vec<PathBuf>) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    let w = csv::Writer::from_path(&path)?;
    written.push(path);
    Ok(w)
}

/// Writes the plot-data files into `dir` and returns their paths.
pub fn write_plot_data(doc: &Document, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match doc {
        Document::Benchmark(r) => benchmark_csvs(r, dir, &mut written)?,
        Document::Loo(r) => loo_csvs(r, dir, &mut written)?,
    }
    Ok(written)
}

fn benchmark_csvs(r: &BenchmarkReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    // Keys as strings keep the f64 fraction sortable in a BTreeMap.
    let mut groups: BTreeMap<(String, usize, String), (Vec<f64>, usize)> = BTreeMap::new();
    for row in &r.rows {
        let e = groups.entry((row.model.to_string(), row.n, format!("{}", row.train_fraction))).or_default();
        match row.mape {
            Some(m) => e.0.push(m),
            None => e.1 += 1,
        }
    }
    let mut w = writer(dir, "mape_bars.csv", written)?;
    w.write_record(["model", "n", "train_fraction", "mean_mape", "cells", "failures"])?;
    for ((model, n, fraction), (v, failures)) in &groups {
        let mean = if v.is_empty() { String::new() } else { (v.iter().sum::<f64>() / v.len() as f64).to_string() };
        w.write_record([model.clone(), n.to_string(), fraction.clone(), mean, v.len().to_string(), failures.to_string()])?;
    }
    w.flush()?;

    let mut w = writer(dir, "forecasts.csv", written)?;
    w.write_record(["test", "model", "n", "train_fraction", "seed", "index", "time", "actual", "predicted"])?;
    for row in r.rows.iter().filter(|r| r.error.is_none()) {
        let Some(trace) = r.traces.iter().find(|t| t.id == row.test) else { continue };
        for (k, p) in row.predictions.iter().enumerate() {
            let i = row.start + k;
            w.write_record([
                row.test.clone(),
                row.model.to_string(),
                row.n.to_string(),
                row.train_fraction.to_string(),
                row.seed.to_string(),
                i.to_string(),
                trace.times[i].to_string(),
                trace.values[i].to_string(),
                p.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(dir, "attention.csv", written)?;
    w.write_record(["test", "model", "train_fraction", "seed", "tau", "time_index", "weight", "is_max"])?;
    for a in &r.attention {
        for step in &a.report.steps {
            for (j, weight) in step.weights.iter().enumerate() {
                w.write_record([
                    a.test.clone(),
                    a.model.to_string(),
                    a.train_fraction.to_string(),
                    a.seed.to_string(),
                    step.tau.to_string(),
                    (a.report.window_start + j).to_string(),
                    weight.to_string(),
                    (j == step.argmax).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn loo_csvs(r: &LooReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let mut w = writer(dir, "loo_mape.csv", written)?;
    w.write_record(["held_out", "model", "train_fraction", "seed", "mape", "quantile_crossings", "error"])?;
    for row in &r.rows {
        w.write_record([
            row.held_out.clone(),
            row.model.to_string(),
            row.train_fraction.to_string(),
            row.seed.to_string(),
            row.mape.map(|m| m.to_string()).unwrap_or_default(),
            row.quantile_crossings.to_string(),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "loo_forecasts.csv", written)?;
    w.write_record(["held_out", "model", "train_fraction", "seed", "index", "time", "actual", "point", "q_low", "q_high"])?;
    for row in &r.rows {
        let (Some(f), Some(trace)) = (&row.forecast, r.traces.iter().find(|t| t.id == row.held_out)) else { continue };
        let lo = f.quantiles.first().map(|b| &b.values);
        let hi = f.quantiles.last().map(|b| &b.values);
        for (k, p) in f.point.iter().enumerate() {
            let i = row.start + k;
            let band = |b: Option<&Vec<f64>>| b.map(|v| v[k].to_string()).unwrap_or_default();
            w.write_record([
                row.held_out.clone(),
                row.model.to_string(),
                row.train_fraction.to_string(),
                row.seed.to_string(),
                i.to_string(),
                trace.times[i].to_string(),
                trace.values[i].to_string(),
                p.to_string(),
                band(lo),
                band(hi),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(dir, "attention.csv", written)?;
    w.write_record(["held_out", "model", "train_fraction", "seed", "tau", "time_index", "weight", "is_max"])?;
    for row in &r.rows {
        let Some(a) = &row.attention else { continue };
        for step in &a.steps {
            for (j, weight) in step.weights.iter().enumerate() {
                w.write_record([
                    row.held_out.clone(),
                    row.model.to_string(),
                    row.train_fraction.to_string(),
                    row.seed.to_string(),
                    step.tau.to_string(),
                    (a.window_start + j).to_string(),
                    weight.to_string(),
                    (j == step.argmax).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
