//! The full Temporal Fusion Transformer.
//!
//! Inputs per sample: the last `input_window` target values, known inputs for
//! every encoder and decoder position, and a static series identifier. Target
//! values enter relative to the last observed value and divided by a scale
//! fixed at training time, so forecasts are increments from the present.

use std::path::Path;

use serde::{Deserialize, Serialize};

use agecast_core::series::{ForecastResult, QuantileBand};

use crate::blocks::{Ctx, Dropout, Glu, Grn, InterpretableMultiHead, Linear, Lstm, Norm, Vsn};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TftConfig {
    pub d_model: usize,
    pub lstm_layers: usize,
    pub heads: usize,
    pub quantiles: Vec<f64>,
    pub input_window: usize,
    pub tau_max: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TftConfig {
    fn default() -> Self {
        Self {
            d_model: 16,
            lstm_layers: 1,
            heads: 2,
            quantiles: vec![0.025, 0.5, 0.975],
            input_window: 12,
            tau_max: 4,
            dropout_rate: 0.1,
            learning_rate: 1e-3,
            max_epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Architectures A–G of the hyperparameter grid: (hidden size, LSTM layers, heads).
pub const PRESETS: [(char, usize, usize, usize); 7] = [
    ('A', 128, 4, 4),
    ('B', 128, 8, 4),
    ('C', 128, 4, 2),
    ('D', 256, 4, 4),
    ('E', 256, 8, 4),
    ('F', 256, 4, 2),
    ('G', 64, 1, 4),
];

impl TftConfig {
    pub fn preset(name: char) -> Result<Self> {
        let name = name.to_ascii_uppercase();
        let (_, d_model, lstm_layers, heads) = PRESETS
            .iter()
            .find(|p| p.0 == name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}, expected A-G")))?;
        Ok(Self { d_model, lstm_layers, heads, ..Default::default() })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("d_model must be a positive multiple of heads");
        }
        if self.lstm_layers == 0 {
            return bad("at least one LSTM layer is required");
        }
        if self.input_window == 0 || self.tau_max == 0 {
            return bad("input_window and tau_max must be >= 1");
        }
        if self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) || self.quantiles.windows(2).any(|w| w[1] <= w[0]) {
            return bad("quantiles must be strictly increasing inside (0, 1)");
        }
        if !self.quantiles.contains(&0.5) {
            return bad("quantiles must include 0.5");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if !(self.learning_rate >= 0.0) || self.batch_size == 0 {
            return bad("learning_rate must be >= 0 and batch_size >= 1");
        }
        Ok(())
    }

    pub fn median_index(&self) -> usize {
        self.quantiles.iter().position(|q| *q == 0.5).expect("validated")
    }
}

/// Which encoder and decoder positions a query may attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionMask {
    /// Each position sees itself and every earlier position.
    #[default]
    Causal,
    /// Decoder positions see only earlier decoder positions; the encoder is
    /// hidden from them entirely.
    DecoderOnly,
}

impl AttentionMask {
    pub fn allowed(self, window: usize, total: usize) -> Vec<bool> {
        let mut m = vec![false; total * total];
        for i in 0..total {
            for j in 0..=i {
                m[i * total + j] = match self {
                    AttentionMask::Causal => true,
                    AttentionMask::DecoderOnly => i < window || j >= window,
                };
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub past_embed: Vec<Linear>,
    pub future_embed: Vec<Linear>,
    pub static_embed: crate::params::ParamId,
    pub static_grns: [Grn; 4],
    pub vsn_past: Vsn,
    pub vsn_future: Vsn,
    pub encoder: Vec<Lstm>,
    pub decoder: Vec<Lstm>,
    pub post_lstm_glu: Glu,
    pub post_lstm_norm: Norm,
    pub enrich: Grn,
    pub attention: InterpretableMultiHead,
    pub post_attn_glu: Glu,
    pub post_attn_norm: Norm,
    pub position_wise: Grn,
    pub final_glu: Glu,
    pub final_norm: Norm,
    pub head: Linear,
}

impl Layout {
    fn build(config: &TftConfig, covariates: usize, statics: usize, store: &mut ParamStore) -> Self {
        let d = config.d_model;
        let known = covariates + 1;
        let mut rng = agecast_core::seeded_rng(config.seed);
        let rng = &mut rng;
        let past_embed = (0..1 + known).map(|j| Linear::new(store, &format!("embed.past{j}"), 1, d, true, rng)).collect();
        let future_embed = (0..known).map(|j| Linear::new(store, &format!("embed.future{j}"), 1, d, true, rng)).collect();
        let static_embed = store.add_weight("embed.static", statics, d, rng);
        let static_grns = ["cs", "ce", "cc", "ch"].map(|n| Grn::new(store, &format!("static.{n}"), d, d, d, None, rng));
        let vsn_past = Vsn::new(store, "vsn.past", 1 + known, d, rng);
        let vsn_future = Vsn::new(store, "vsn.future", known, d, rng);
        let encoder = (0..config.lstm_layers).map(|l| Lstm::new(store, &format!("lstm.enc{l}"), d, d, rng)).collect();
        let decoder = (0..config.lstm_layers).map(|l| Lstm::new(store, &format!("lstm.dec{l}"), d, d, rng)).collect();
        Self {
            past_embed,
            future_embed,
            static_embed,
            static_grns,
            vsn_past,
            vsn_future,
            encoder,
            decoder,
            post_lstm_glu: Glu::new(store, "post_lstm.glu", d, d, rng),
            post_lstm_norm: Norm::new(store, "post_lstm.norm", d),
            enrich: Grn::new(store, "enrich", d, d, d, Some(d), rng),
            attention: InterpretableMultiHead::new(store, "attention", d, config.heads, rng),
            post_attn_glu: Glu::new(store, "post_attn.glu", d, d, rng),
            post_attn_norm: Norm::new(store, "post_attn.norm", d),
            position_wise: Grn::new(store, "position_wise", d, d, d, None, rng),
            final_glu: Glu::new(store, "final.glu", d, d, rng),
            final_norm: Norm::new(store, "final.norm", d),
            head: Linear::new(store, "head", d, config.quantiles.len(), true, rng),
        }
    }
}

/// One prepared sample in model units.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Encoder targets, `input_window × 1`.
    pub past_target: Tensor,
    /// Known inputs for all positions, `(input_window + tau_max) × known`.
    pub known: Tensor,
    /// Mixing weights over static identifiers, `1 × statics`.
    pub static_row: Tensor,
}

/// Outputs of one forward pass recorded on a tape.
pub struct Forward {
    /// `tau_max × quantiles`, in model units.
    pub prediction: Var,
    /// Head-averaged attention over all positions.
    pub attention: Var,
    pub past_weights: Var,
    pub future_weights: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TftConfig,
    pub covariates: usize,
    pub static_ids: Vec<String>,
    pub scale: f64,
    pub params: ParamStore,
}

#[derive(Debug, Clone)]
pub struct TftModel {
    pub config: TftConfig,
    /// Number of covariate channels; a relative-position input is always added.
    pub covariates: usize,
    pub static_ids: Vec<String>,
    /// Divisor applied to target increments.
    pub scale: f64,
    pub params: ParamStore,
    layout: Layout,
}

/// Quantile forecasts for one block of `tau_max` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `values[t][k]`: step `t + 1`, quantile `k`, in ohms.
    pub values: Vec<Vec<f64>>,
    /// Head-averaged attention over all positions.
    pub attention: Tensor,
}

impl TftModel {
    pub fn new(config: TftConfig, covariates: usize, static_ids: Vec<String>, scale: f64) -> Result<Self> {
        config.validate()?;
        if static_ids.is_empty() {
            return Err(Error::Config("at least one static identifier is required".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        let mut params = ParamStore::new();
        let layout = Layout::build(&config, covariates, static_ids.len(), &mut params);
        Ok(Self { config, covariates, static_ids, scale, params, layout })
    }

    pub fn total_len(&self) -> usize {
        self.config.input_window + self.config.tau_max
    }

    /// One-hot row for a known identifier, the uniform mixture otherwise.
    pub fn static_row(&self, id: Option<&str>) -> Tensor {
        let n = self.static_ids.len();
        match id.and_then(|id| self.static_ids.iter().position(|s| s == id)) {
            Some(i) => {
                let mut row = Tensor::zeros(1, n);
                row.data[i] = 1.0;
                row
            }
            None => Tensor::filled(1, n, 1.0 / n as f64),
        }
    }

    /// Relative position of slot `i` in a window: encoder slots are `≤ 0`,
    /// decoder slots run `1/τ_max .. 1`.
    fn position(&self, i: usize) -> f64 {
        (i as f64 - (self.config.input_window as f64 - 1.0)) / self.config.tau_max as f64
    }

    /// Builds a model-unit sample from raw values. `known` holds the covariate
    /// rows for every encoder and decoder position.
    pub fn prepare(&self, history: &[f64], known: &[Vec<f64>], static_id: Option<&str>) -> Result<Sample> {
        let (w, total) = (self.config.input_window, self.total_len());
        if history.len() != w {
            return Err(Error::Shape(format!("history has {} values, input_window is {w}", history.len())));
        }
        if known.len() != total || known.iter().any(|r| r.len() != self.covariates) {
            return Err(Error::Shape(format!(
                "known inputs must be {total} rows of {} covariates",
                self.covariates
            )));
        }
        agecast_core::error::ensure_finite(history)?;
        let last = history[w - 1];
        let past_target = Tensor::column_vector(history.iter().map(|v| (v - last) / self.scale).collect());
        let mut k = Tensor::zeros(total, self.covariates + 1);
        for (i, row) in known.iter().enumerate() {
            k.row_mut(i)[..self.covariates].copy_from_slice(row);
            k.set(i, self.covariates, self.position(i));
        }
        if !k.is_finite() {
            return Err(Error::Shape("known inputs must be finite".into()));
        }
        Ok(Sample { past_target, known: k, static_row: self.static_row(static_id) })
    }

    /// Records a forward pass on `ctx`.
    pub fn forward(&self, ctx: &mut Ctx, sample: &Sample, mask: AttentionMask) -> Forward {
        let lay = &self.layout;
        let (w, tau) = (self.config.input_window, self.config.tau_max);
        let known = self.covariates + 1;

        let target = ctx.constant(sample.past_target.clone());
        let known_all = ctx.constant(sample.known.clone());
        let known_past = ctx.tape.slice_rows(known_all, 0, w);
        let known_future = ctx.tape.slice_rows(known_all, w, tau);

        let mut past = vec![lay.past_embed[0].forward(ctx, target)];
        for j in 0..known {
            let col = ctx.tape.slice_cols(known_past, j, 1);
            past.push(lay.past_embed[j + 1].forward(ctx, col));
        }
        let future: Vec<Var> = (0..known)
            .map(|j| {
                let col = ctx.tape.slice_cols(known_future, j, 1);
                lay.future_embed[j].forward(ctx, col)
            })
            .collect();

        let static_row = ctx.constant(sample.static_row.clone());
        let emb = ctx.param(lay.static_embed);
        let zeta = ctx.tape.matmul(static_row, emb);
        let [c_s, c_e, c_c, c_h] = [0, 1, 2, 3].map(|i| lay.static_grns[i].forward(ctx, zeta, None));

        let (past_sel, past_weights) = lay.vsn_past.forward(ctx, &past, Some(c_s));
        let (future_sel, future_weights) = lay.vsn_future.forward(ctx, &future, Some(c_s));

        let mut enc_in = past_sel;
        let mut dec_in = future_sel;
        for (enc, dec) in lay.encoder.iter().zip(&lay.decoder) {
            let (enc_out, h, c) = enc.forward(ctx, enc_in, c_h, c_c);
            let (dec_out, _, _) = dec.forward(ctx, dec_in, h, c);
            enc_in = ctx.tape.concat_rows(&enc_out);
            dec_in = ctx.tape.concat_rows(&dec_out);
        }
        let phi = ctx.tape.concat_rows(&[enc_in, dec_in]);
        let selected = ctx.tape.concat_rows(&[past_sel, future_sel]);
        let gated = lay.post_lstm_glu.forward(ctx, phi);
        let skip = ctx.tape.add(gated, selected);
        let phi_tilde = lay.post_lstm_norm.forward(ctx, skip);

        let theta = lay.enrich.forward(ctx, phi_tilde, Some(c_e));
        let allowed = mask.allowed(w, w + tau);
        let (attn, attention) = lay.attention.forward(ctx, theta, theta, theta, Some(&allowed));
        let gated = lay.post_attn_glu.forward(ctx, attn);
        let skip = ctx.tape.add(gated, theta);
        let delta = lay.post_attn_norm.forward(ctx, skip);

        let psi = lay.position_wise.forward(ctx, delta, None);
        let gated = lay.final_glu.forward(ctx, psi);
        let skip = ctx.tape.add(gated, phi_tilde);
        let psi_tilde = lay.final_norm.forward(ctx, skip);
        let decoded = ctx.tape.slice_rows(psi_tilde, w, tau);
        let prediction = lay.head.forward(ctx, decoded);
        Forward { prediction, attention, past_weights, future_weights }
    }

    /// Forward pass in model units (increments over the last value, divided
    /// by the scale). Returns `tau_max × quantiles` and the attention matrix.
    pub fn forward_normalized(&self, sample: &Sample, mask: AttentionMask) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &self.params);
        let out = self.forward(&mut ctx, sample, mask);
        (ctx.value(out.prediction).clone(), ctx.value(out.attention).clone())
    }

    /// Variable selection weights for the past and future inputs.
    pub fn selection_weights(&self, sample: &Sample) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &self.params);
        let out = self.forward(&mut ctx, sample, AttentionMask::Causal);
        (ctx.value(out.past_weights).clone(), ctx.value(out.future_weights).clone())
    }

    pub(crate) fn training_ctx<'a>(&'a self, tape: &'a mut Tape, dropout_seed: u64) -> Ctx<'a> {
        let dropout = Dropout { rate: self.config.dropout_rate, rng: agecast_core::seeded_rng(dropout_seed) };
        Ctx::new(tape, &self.params).with_dropout(Some(dropout))
    }

    /// Quantile forecasts for the next `tau_max` steps.
    pub fn predict(&self, history: &[f64], known: &[Vec<f64>], static_id: Option<&str>) -> Result<Prediction> {
        let sample = self.prepare(history, known, static_id)?;
        let (out, attention) = self.forward_normalized(&sample, AttentionMask::Causal);
        let last = history[history.len() - 1];
        let values: Vec<Vec<f64>> = out.to_rows().into_iter().map(|r| r.into_iter().map(|z| last + self.scale * z).collect()).collect();
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite forecast".into()));
        }
        Ok(Prediction { values, attention })
    }

    /// `h`-step forecast by iterating `tau_max`-step blocks, feeding median
    /// forecasts back as history. `covariates` has one row per time index and
    /// must reach `history.len() + h` rows rounded up to a whole block.
    pub fn forecast(&self, history: &[f64], covariates: &[Vec<f64>], static_id: Option<&str>, h: usize) -> Result<ForecastResult> {
        let (w, tau) = (self.config.input_window, self.config.tau_max);
        if h == 0 {
            return Err(Error::Config("forecast horizon must be >= 1".into()));
        }
        if history.len() < w {
            return Err(agecast_core::Error::TooShort { len: history.len(), min: w }.into());
        }
        let blocks = h.div_ceil(tau);
        let needed = history.len() + blocks * tau;
        if covariates.len() < needed {
            return Err(Error::Shape(format!("covariates cover {} time steps, {needed} needed", covariates.len())));
        }
        let median = self.config.median_index();
        let mut work = history.to_vec();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(blocks * tau);
        while rows.len() < h {
            let n = work.len();
            let p = self.predict(&work[n - w..], &covariates[n - w..n + tau], static_id)?;
            for r in p.values {
                work.push(r[median]);
                rows.push(r);
            }
        }
        rows.truncate(h);
        let point: Vec<f64> = rows.iter().map(|r| r[median]).collect();
        let bands = self
            .config
            .quantiles
            .iter()
            .enumerate()
            .map(|(k, &q)| QuantileBand { q, values: rows.iter().map(|r| r[k]).collect() })
            .collect();
        Ok(ForecastResult::with_quantiles(history.len() - 1, point, bands)?)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            covariates: self.covariates,
            static_ids: self.static_ids.clone(),
            scale: self.scale,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut model = Self::new(ck.config, ck.covariates, ck.static_ids, ck.scale)?;
        if model.params.names() != ck.params.names() {
            return Err(Error::Checkpoint("parameter names differ from the configured layout".into()));
        }
        for ((name, a), (_, b)) in model.params.iter().zip(ck.params.iter()) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!("{name}: expected {:?}, found {:?}", a.shape(), b.shape())));
            }
            if !b.is_finite() {
                return Err(Error::Checkpoint(format!("{name} holds non-finite values")));
            }
        }
        model.params = ck.params;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TftConfig {
        TftConfig { d_model: 4, heads: 2, input_window: 5, tau_max: 3, ..Default::default() }
    }

    fn known(rows: usize, k: usize) -> Vec<Vec<f64>> {
        (0..rows).map(|i| (0..k).map(|j| 0.1 * (i + j) as f64).collect()).collect()
    }

    #[test]
    fn presets_match_grid() {
        let g = TftConfig::preset('G').unwrap();
        assert_eq!((g.d_model, g.lstm_layers, g.heads), (64, 1, 4));
        let e = TftConfig::preset('e').unwrap();
        assert_eq!((e.d_model, e.lstm_layers, e.heads), (256, 8, 4));
        assert!(TftConfig::preset('H').is_err());
        for p in PRESETS {
            TftConfig::preset(p.0).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn config_validation() {
        assert!(TftConfig { d_model: 5, heads: 2, ..Default::default() }.validate().is_err());
        assert!(TftConfig { quantiles: vec![0.1, 0.9], ..Default::default() }.validate().is_err());
        assert!(TftConfig { quantiles: vec![0.5, 0.1], ..Default::default() }.validate().is_err());
        assert!(TftConfig { quantiles: vec![0.5, 1.0], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn constant_head_forecasts_its_bias() {
        let mut m = TftModel::new(small(), 1, vec!["a".into()], 1.0).unwrap();
        for id in m.params.ids().collect::<Vec<_>>() {
            m.params.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let bias = m.layout.head.b.unwrap();
        m.params.get_mut(bias).data.copy_from_slice(&[-0.2, 0.1, 0.7]);
        let s = m.prepare(&[0.0, 0.1, 0.2, 0.3, 0.4], &known(8, 1), Some("a")).unwrap();
        let (out, _) = m.forward_normalized(&s, AttentionMask::Causal);
        for t in 0..3 {
            assert_eq!(out.row(t), &[-0.2, 0.1, 0.7]);
        }
        // In ohms the forecast is the last value plus scale times the output.
        let p = m.predict(&[0.0, 0.1, 0.2, 0.3, 0.4], &known(8, 1), Some("a")).unwrap();
        assert!((p.values[0][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn attention_rows_are_causal_simplices() {
        let m = TftModel::new(small(), 2, vec!["a".into(), "b".into()], 0.5).unwrap();
        let s = m.prepare(&[0.0, 0.1, 0.3, 0.2, 0.5], &known(8, 2), None).unwrap();
        let (_, a) = m.forward_normalized(&s, AttentionMask::Causal);
        for i in 0..8 {
            let row = a.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row[i + 1..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn input_checks() {
        let m = TftModel::new(small(), 1, vec!["a".into()], 1.0).unwrap();
        assert!(m.prepare(&[0.0; 4], &known(8, 1), None).is_err());
        assert!(m.prepare(&[0.0; 5], &known(7, 1), None).is_err());
        assert!(m.prepare(&[0.0; 5], &known(8, 2), None).is_err());
        assert!(TftModel::new(small(), 1, vec![], 1.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = TftModel::new(small(), 1, vec!["a".into()], 0.25).unwrap();
        let back = TftModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.checkpoint(), m.checkpoint());

        let mut ck = m.checkpoint();
        ck.config.d_model = 8;
        assert!(TftModel::from_checkpoint(ck).is_err());
    }

    #[test]
    fn iterated_forecast_lengths() {
        let m = TftModel::new(small(), 0, vec!["a".into()], 1.0).unwrap();
        let hist: Vec<f64> = (0..7).map(|t| 0.01 * t as f64).collect();
        let cov = vec![vec![]; 7 + 9];
        let f = m.forecast(&hist, &cov, None, 7).unwrap();
        assert_eq!(f.horizon, 7);
        assert_eq!(f.origin_index, 6);
        assert_eq!(f.quantiles.len(), 3);
        assert!(m.forecast(&hist, &cov[..10], None, 7).is_err());
    }
}
