//! Central finite-difference checks of the tape gradients, block by block.

use rand::Rng;

use crate::blocks::{attention, Ctx, Glu, Grn, InterpretableMultiHead, Linear, Lstm, Vsn};
use crate::error::Result;
use crate::model::{AttentionMask, TftConfig, TftModel};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-4;

/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Glu,
    Grn,
    Vsn,
    Attention,
    MultiHead,
    Lstm,
    QuantileHead,
    FullForward,
}

pub const BLOCKS: [Block; 8] = [
    Block::Glu,
    Block::Grn,
    Block::Vsn,
    Block::Attention,
    Block::MultiHead,
    Block::Lstm,
    Block::QuantileHead,
    Block::FullForward,
];

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub block: Block,
    /// Scalars compared.
    pub checked: usize,
    pub max_rel_error: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Fixed, non-degenerate weights used to reduce a block output to a scalar.
fn readout(rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|k| (1.3 * (k / cols) as f64 + 0.7 * (k % cols) as f64 + 0.1).sin()).collect();
    Tensor { rows, cols, data }
}

fn scalar(store: &ParamStore, f: &dyn Fn(&mut Ctx) -> Var) -> f64 {
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, store);
    let out = f(&mut ctx);
    let (r, c) = ctx.tape.shape(out);
    let s = ctx.tape.dot(out, readout(r, c));
    ctx.value(s).data[0]
}

/// Compares the tape gradient of every scalar parameter in `store` with a
/// central difference.
fn compare(store: &ParamStore, f: &dyn Fn(&mut Ctx) -> Var) -> (usize, f64) {
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, store);
    let out = f(&mut ctx);
    let (r, c) = ctx.tape.shape(out);
    let s = ctx.tape.dot(out, readout(r, c));
    let grads = tape.backward(s);
    let mut analytic = store.zeros_like();
    for (id, g) in tape.param_grads(&grads) {
        analytic[id.0] = g.clone();
    }
    let mut work = store.clone();
    let (mut checked, mut worst) = (0, 0.0f64);
    for id in store.ids() {
        for k in 0..store.get(id).len() {
            let x = store.get(id).data[k];
            let mut central = |h: f64| {
                work.get_mut(id).data[k] = x + h;
                let up = scalar(&work, f);
                work.get_mut(id).data[k] = x - h;
                let down = scalar(&work, f);
                work.get_mut(id).data[k] = x;
                (up - down) / (2.0 * h)
            };
            // Richardson extrapolation cancels the O(h²) truncation term, so
            // the step can stay large enough to keep round-off small.
            let numeric = (4.0 * central(STEP / 2.0) - central(STEP)) / 3.0;
            worst = worst.max(relative_error(analytic[id.0].data[k], numeric));
            checked += 1;
        }
    }
    (checked, worst)
}

fn randomize(store: &mut ParamStore, rng: &mut impl Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
    }
}

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor { rows, cols, data: (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect() }
}

/// Checks one random small instance of `block`.
pub fn check_block(block: Block, seed: u64) -> Result<GradCheck> {
    let mut rng = agecast_core::seeded_rng(seed);
    let rng = &mut rng;
    let mut store = ParamStore::new();
    let (checked, max_rel_error) = match block {
        Block::Glu => {
            let glu = Glu::new(&mut store, "glu", 3, 2, rng);
            randomize(&mut store, rng);
            let x = random(4, 3, rng);
            compare(&store, &|ctx| {
                let x = ctx.constant(x.clone());
                glu.forward(ctx, x)
            })
        }
        Block::Grn => {
            let grn = Grn::new(&mut store, "grn", 3, 4, 2, Some(2), rng);
            randomize(&mut store, rng);
            let (a, c) = (random(3, 3, rng), random(1, 2, rng));
            compare(&store, &|ctx| {
                let (a, c) = (ctx.constant(a.clone()), ctx.constant(c.clone()));
                grn.forward(ctx, a, Some(c))
            })
        }
        Block::Vsn => {
            let vsn = Vsn::new(&mut store, "vsn", 3, 2, rng);
            randomize(&mut store, rng);
            let xs: Vec<Tensor> = (0..3).map(|_| random(3, 2, rng)).collect();
            let cs = random(1, 2, rng);
            compare(&store, &|ctx| {
                let xs: Vec<Var> = xs.iter().map(|x| ctx.constant(x.clone())).collect();
                let cs = ctx.constant(cs.clone());
                vsn.forward(ctx, &xs, Some(cs)).0
            })
        }
        Block::Attention => {
            let q = store.add("q", random(3, 2, rng));
            let k = store.add("k", random(4, 2, rng));
            let v = store.add("v", random(4, 3, rng));
            let allowed: Vec<bool> = (0..12).map(|i| i % 4 <= i / 4 + 1).collect();
            compare(&store, &|ctx| {
                let (q, k, v) = (ctx.param(q), ctx.param(k), ctx.param(v));
                attention(ctx.tape, q, k, v, Some(&allowed)).0
            })
        }
        Block::MultiHead => {
            let mh = InterpretableMultiHead::new(&mut store, "mh", 4, 2, rng);
            randomize(&mut store, rng);
            let x = random(4, 4, rng);
            let allowed = AttentionMask::Causal.allowed(4, 4);
            compare(&store, &|ctx| {
                let x = ctx.constant(x.clone());
                mh.forward(ctx, x, x, x, Some(&allowed)).0
            })
        }
        Block::Lstm => {
            let lstm = Lstm::new(&mut store, "lstm", 2, 3, rng);
            randomize(&mut store, rng);
            let (x, h, c) = (random(4, 2, rng), random(1, 3, rng), random(1, 3, rng));
            compare(&store, &|ctx| {
                let (x, h, c) = (ctx.constant(x.clone()), ctx.constant(h.clone()), ctx.constant(c.clone()));
                let (outs, _, c) = lstm.forward(ctx, x, h, c);
                let all = ctx.tape.concat_rows(&outs);
                ctx.tape.concat_rows(&[all, c])
            })
        }
        Block::QuantileHead => {
            let head = Linear::new(&mut store, "head", 4, 3, true, rng);
            randomize(&mut store, rng);
            let x = random(2, 4, rng);
            compare(&store, &|ctx| {
                let x = ctx.constant(x.clone());
                head.forward(ctx, x)
            })
        }
        Block::FullForward => {
            let cfg = TftConfig {
                d_model: 4,
                heads: 2,
                input_window: 4,
                tau_max: 2,
                seed,
                ..TftConfig::default()
            };
            let mut model = TftModel::new(cfg, 1, vec!["a".into(), "b".into()], 0.5)?;
            randomize(&mut model.params, rng);
            let history: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let known: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
            let sample = model.prepare(&history, &known, Some("b"))?;
            compare(&model.params, &|ctx| model.forward(ctx, &sample, AttentionMask::Causal).prediction)
        }
    };
    Ok(GradCheck { block, checked, max_rel_error })
}
