//! Architecture selection over the preset grid by counting wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use agecast_core::{mape, DegradationTrace};
use agecast_tft::TftConfig;

use crate::engine::{ModelKind, ModelSettings};
use crate::error::{Error, Result};
use crate::loo::long_term_forecast;

/// One scenario: train on `train`, forecast `target` from the fraction point.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub name: String,
    pub train: Vec<DegradationTrace>,
    pub target: DegradationTrace,
    pub train_fraction: f64,
    pub covariates: bool,
}

/// Leave-one-out cells over a family, one per held-out trace and fraction.
pub fn loo_cells(family: &[DegradationTrace], fractions: &[f64], covariates: bool) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &f in fractions {
        for (i, target) in family.iter().enumerate() {
            let train = family.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| t.clone()).collect();
            cells.push(SweepCell {
                name: format!("{}@{f}", target.id()),
                train,
                target: target.clone(),
                train_fraction: f,
                covariates,
            });
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub presets: Vec<char>,
    pub cells: Vec<String>,
    /// `mapes[cell][preset]`; `None` where the preset failed.
    pub mapes: Vec<Vec<Option<f64>>>,
    pub wins: Vec<usize>,
    /// Cells where every preset failed.
    pub excluded: Vec<String>,
    pub winner: char,
}

/// Win counts per preset and the winning index. A cell's win goes to every
/// preset reaching its lowest MAPE; cells without any result are skipped.
/// Ties in the count go to the smaller `d_model`, then fewer LSTM layers,
/// then the earlier preset.
pub fn tally(configs: &[TftConfig], mapes: &[Vec<Option<f64>>]) -> (Vec<usize>, usize) {
    let mut wins = vec![0; configs.len()];
    for row in mapes {
        let best = row.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            for (k, m) in row.iter().enumerate() {
                if *m == Some(best) {
                    wins[k] += 1;
                }
            }
        }
    }
    let winner = (0..configs.len())
        .min_by_key(|&k| (std::cmp::Reverse(wins[k]), configs[k].d_model, configs[k].lstm_layers, k))
        .expect("at least one preset");
    (wins, winner)
}

/// Runs every preset on every cell. `base` supplies everything but the
/// architecture (window, horizon, epochs, seed).
pub fn sweep_architectures(presets: &[char], cells: &[SweepCell], base: &TftConfig) -> Result<SweepReport> {
    if presets.is_empty() {
        return Err(Error::Config("at least one preset is required".into()));
    }
    if cells.is_empty() {
        return Err(Error::Config("at least one scenario cell is required".into()));
    }
    let configs = presets
        .iter()
        .map(|&c| {
            let p = TftConfig::preset(c).map_err(|e| Error::Config(e.to_string()))?;
            Ok(TftConfig { d_model: p.d_model, heads: p.heads, lstm_layers: p.lstm_layers, ..base.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let settings = ModelSettings::default();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..configs.len()).map(move |k| (c, k))).collect();
    let results: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let cell = &cells[c];
            let model = if cell.covariates { ModelKind::TftWcov } else { ModelKind::Tft };
            long_term_forecast(model, &cell.train, &cell.target, cell.train_fraction, base.seed, &settings, Some(&configs[k]))
                .and_then(|(p, f, _)| Ok(mape(&cell.target.values()[p..], &f.point)?))
                .ok()
        })
        .collect();
    let mapes: Vec<Vec<Option<f64>>> = results.chunks(configs.len()).map(<[_]>::to_vec).collect();
    let excluded = cells
        .iter()
        .zip(&mapes)
        .filter(|(_, row)| row.iter().all(Option::is_none))
        .map(|(c, _)| c.name.clone())
        .collect();
    let (wins, winner) = tally(&configs, &mapes);
    Ok(SweepReport {
        presets: presets.to_vec(),
        cells: cells.iter().map(|c| c.name.clone()).collect(),
        mapes,
        wins,
        excluded,
        winner: presets[winner],
    })
}
