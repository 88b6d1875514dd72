//! TFT building blocks. Each block holds only parameter ids; values live in a
//! [`ParamStore`] and every forward pass is recorded on a [`Tape`].

use rand::Rng;

use agecast_core::SeededRng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Inverted dropout applied to GRN hidden activations during training.
#[derive(Debug)]
pub struct Dropout {
    pub rate: f64,
    pub rng: SeededRng,
}

/// One forward pass: the tape, the parameters it reads and optional dropout.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    store: &'a ParamStore,
    cache: Vec<Option<Var>>,
    dropout: Option<Dropout>,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a mut Tape, store: &'a ParamStore) -> Self {
        Self { tape, store, cache: vec![None; store.len()], dropout: None }
    }

    pub fn with_dropout(mut self, dropout: Option<Dropout>) -> Self {
        self.dropout = dropout.filter(|d| d.rate > 0.0);
        self
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// The tape node of a parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.cache[id.0] {
            return v;
        }
        let v = self.tape.param(id, self.store.get(id));
        self.cache[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.tape.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    fn dropout(&mut self, x: Var) -> Var {
        let Some(d) = self.dropout.as_mut() else { return x };
        let (rows, cols) = self.tape.shape(x);
        let keep = 1.0 - d.rate;
        let data = (0..rows * cols).map(|_| if d.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        self.tape.mul_const(x, Tensor { rows, cols, data })
    }
}

fn check_cols(what: &str, t: &Tensor, cols: usize) -> Result<()> {
    if t.cols != cols || t.rows == 0 {
        return Err(Error::Shape(format!("{what}: expected rows of width {cols}, got {:?}", t.shape())));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut SeededRng) -> Self {
        let w = store.add_weight(format!("{name}.w"), in_dim, out_dim, rng);
        let b = bias.then(|| store.add_filled(format!("{name}.b"), 1, out_dim, 0.0));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Var {
        let w = ctx.param(self.w);
        let y = ctx.tape.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = ctx.param(b);
                ctx.tape.add_row(y, b)
            }
            None => y,
        }
    }
}

/// Gated linear unit `σ(W4·γ + b4) ⊙ (W5·γ + b5)`.
#[derive(Debug, Clone)]
pub struct Glu {
    pub gate: Linear,
    pub value: Linear,
}

impl Glu {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        Self {
            gate: Linear::new(store, &format!("{name}.gate"), in_dim, out_dim, true, rng),
            value: Linear::new(store, &format!("{name}.value"), in_dim, out_dim, true, rng),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Var {
        let g = self.gate.forward(ctx, x);
        let g = ctx.tape.sigmoid(g);
        let v = self.value.forward(ctx, x);
        ctx.tape.mul(g, v)
    }

    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        check_cols("glu input", x, self.gate.in_dim)?;
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, store);
        let xv = ctx.constant(x.clone());
        let y = self.forward(&mut ctx, xv);
        Ok(ctx.value(y).clone())
    }
}

/// Row-wise layer normalisation parameters.
#[derive(Debug, Clone)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add_filled(format!("{name}.gain"), 1, dim, 1.0),
            bias: store.add_filled(format!("{name}.bias"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Var {
        let g = ctx.param(self.gain);
        let b = ctx.param(self.bias);
        ctx.tape.layer_norm(x, g, b)
    }
}

/// `LayerNorm(skip(a) + GLU(η1))`, `η1 = W1·η2 + b1`, `η2 = ELU(W2·a + W3·c + b2)`.
/// `skip` is the identity when input and output widths agree and a linear
/// projection otherwise.
#[derive(Debug, Clone)]
pub struct Grn {
    pub input: Linear,
    pub context: Option<Linear>,
    pub hidden: Linear,
    pub glu: Glu,
    pub skip: Option<Linear>,
    pub norm: Norm,
}

impl Grn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        context_dim: Option<usize>,
        rng: &mut SeededRng,
    ) -> Self {
        Self {
            input: Linear::new(store, &format!("{name}.w2"), in_dim, hidden, true, rng),
            context: context_dim.map(|c| Linear::new(store, &format!("{name}.w3"), c, hidden, false, rng)),
            hidden: Linear::new(store, &format!("{name}.w1"), hidden, hidden, true, rng),
            glu: Glu::new(store, &format!("{name}.glu"), hidden, out_dim, rng),
            skip: (in_dim != out_dim).then(|| Linear::new(store, &format!("{name}.skip"), in_dim, out_dim, true, rng)),
            norm: Norm::new(store, &format!("{name}.norm"), out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.input.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.glu.gate.out_dim
    }

    /// `c` is a single `1 × context` row broadcast over the rows of `a`; an
    /// absent context contributes nothing, exactly as a zero context would.
    pub fn forward(&self, ctx: &mut Ctx, a: Var, c: Option<Var>) -> Var {
        let mut pre = self.input.forward(ctx, a);
        if let (Some(lin), Some(c)) = (&self.context, c) {
            let cw = lin.forward(ctx, c);
            pre = ctx.tape.add_row(pre, cw);
        }
        let eta2 = ctx.tape.elu(pre);
        let eta1 = self.hidden.forward(ctx, eta2);
        let eta1 = ctx.dropout(eta1);
        let gated = self.glu.forward(ctx, eta1);
        let residual = match &self.skip {
            Some(s) => s.forward(ctx, a),
            None => a,
        };
        let sum = ctx.tape.add(residual, gated);
        self.norm.forward(ctx, sum)
    }

    pub fn eval(&self, store: &ParamStore, a: &Tensor, c: Option<&Tensor>) -> Result<Tensor> {
        check_cols("grn input", a, self.in_dim())?;
        if let Some(c) = c {
            let Some(lin) = &self.context else {
                return Err(Error::Shape("this GRN takes no context".into()));
            };
            if c.shape() != (1, lin.in_dim) {
                return Err(Error::Shape(format!("grn context: expected 1x{}, got {:?}", lin.in_dim, c.shape())));
            }
        }
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, store);
        let av = ctx.constant(a.clone());
        let cv = c.map(|c| ctx.constant(c.clone()));
        let y = self.forward(&mut ctx, av, cv);
        Ok(ctx.value(y).clone())
    }
}

/// Variable selection network over `m` embedded inputs of width `d`.
#[derive(Debug, Clone)]
pub struct Vsn {
    pub variables: Vec<Grn>,
    pub select: Grn,
    pub d_model: usize,
}

impl Vsn {
    pub fn new(store: &mut ParamStore, name: &str, m: usize, d_model: usize, rng: &mut SeededRng) -> Self {
        let select = Grn::new(store, &format!("{name}.select"), m * d_model, d_model, m, Some(d_model), rng);
        let variables = (0..m)
            .map(|j| Grn::new(store, &format!("{name}.var{j}"), d_model, d_model, d_model, None, rng))
            .collect();
        Self { variables, select, d_model }
    }

    pub fn width(&self) -> usize {
        self.variables.len()
    }

    /// Returns the weighted combination (`rows × d`) and the selection
    /// weights (`rows × m`).
    pub fn forward(&self, ctx: &mut Ctx, embedded: &[Var], c_s: Option<Var>) -> (Var, Var) {
        assert_eq!(embedded.len(), self.variables.len(), "vsn variable count");
        let flat = ctx.tape.concat_cols(embedded);
        let logits = self.select.forward(ctx, flat, c_s);
        let weights = ctx.tape.softmax(logits, None);
        let mut combined = None;
        for (j, (grn, &e)) in self.variables.iter().zip(embedded).enumerate() {
            let processed = grn.forward(ctx, e, None);
            let wj = ctx.tape.slice_cols(weights, j, 1);
            let term = ctx.tape.mul_col(processed, wj);
            combined = Some(match combined {
                None => term,
                Some(acc) => ctx.tape.add(acc, term),
            });
        }
        (combined.expect("at least one variable"), weights)
    }

    pub fn eval(&self, store: &ParamStore, embedded: &[Tensor], c_s: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        if embedded.len() != self.width() {
            return Err(Error::Shape(format!("vsn expects {} variables, got {}", self.width(), embedded.len())));
        }
        let rows = embedded[0].rows;
        for e in embedded {
            check_cols("vsn input", e, self.d_model)?;
            if e.rows != rows {
                return Err(Error::Shape("vsn inputs must have equal row counts".into()));
            }
        }
        if let Some(c) = c_s {
            if c.shape() != (1, self.d_model) {
                return Err(Error::Shape(format!("vsn context: expected 1x{}, got {:?}", self.d_model, c.shape())));
            }
        }
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, store);
        let vars: Vec<Var> = embedded.iter().map(|e| ctx.constant(e.clone())).collect();
        let cv = c_s.map(|c| ctx.constant(c.clone()));
        let (out, w) = self.forward(&mut ctx, &vars, cv);
        Ok((ctx.value(out).clone(), ctx.value(w).clone()))
    }
}

/// One LSTM layer with gates ordered input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub input: Linear,
    pub recurrent: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let input = Linear::new(store, &format!("{name}.wx"), in_dim, 4 * hidden, true, rng);
        if let Some(b) = input.b {
            // Forget-gate bias of one keeps early gradients flowing through time.
            store.get_mut(b).data[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        }
        let recurrent = store.add_weight(format!("{name}.wh"), hidden, 4 * hidden, rng);
        Self { input, recurrent, hidden }
    }

    /// Runs the layer over the rows of `x`. Returns the per-step outputs and
    /// the final hidden and cell states.
    pub fn forward(&self, ctx: &mut Ctx, x: Var, h0: Var, c0: Var) -> (Vec<Var>, Var, Var) {
        let d = self.hidden;
        let xw = self.input.forward(ctx, x);
        let wh = ctx.param(self.recurrent);
        let (mut h, mut c) = (h0, c0);
        let steps = ctx.tape.shape(x).0;
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = ctx.tape.slice_rows(xw, t, 1);
            let hw = ctx.tape.matmul(h, wh);
            let z = ctx.tape.add(xt, hw);
            let i = ctx.tape.slice_cols(z, 0, d);
            let i = ctx.tape.sigmoid(i);
            let f = ctx.tape.slice_cols(z, d, d);
            let f = ctx.tape.sigmoid(f);
            let g = ctx.tape.slice_cols(z, 2 * d, d);
            let g = ctx.tape.tanh(g);
            let o = ctx.tape.slice_cols(z, 3 * d, d);
            let o = ctx.tape.sigmoid(o);
            let fc = ctx.tape.mul(f, c);
            let ig = ctx.tape.mul(i, g);
            c = ctx.tape.add(fc, ig);
            let tc = ctx.tape.tanh(c);
            h = ctx.tape.mul(o, tc);
            outputs.push(h);
        }
        (outputs, h, c)
    }
}

/// `Softmax(QKᵀ/√d_k)·V`, also returning the attention weights.
pub fn attention(tape: &mut Tape, q: Var, k: Var, v: Var, allowed: Option<&[bool]>) -> (Var, Var) {
    let dk = tape.shape(q).1;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt);
    let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
    let weights = tape.softmax(scores, allowed);
    (tape.matmul(weights, v), weights)
}

/// Value-level attention with shape checks.
pub fn attention_eval(q: &Tensor, k: &Tensor, v: &Tensor, allowed: Option<&[bool]>) -> Result<(Tensor, Tensor)> {
    if q.cols != k.cols || k.rows != v.rows || q.rows == 0 || k.rows == 0 {
        return Err(Error::Shape(format!("attention Q{:?} K{:?} V{:?}", q.shape(), k.shape(), v.shape())));
    }
    if let Some(m) = allowed {
        if m.len() != q.rows * k.rows {
            return Err(Error::Shape("attention mask size".into()));
        }
        if (0..q.rows).any(|i| !m[i * k.rows..(i + 1) * k.rows].iter().any(|&x| x)) {
            return Err(Error::Shape("attention mask blocks a whole row".into()));
        }
    }
    let mut tape = Tape::new();
    let (qv, kv, vv) = (tape.constant(q.clone()), tape.constant(k.clone()), tape.constant(v.clone()));
    let (out, w) = attention(&mut tape, qv, kv, vv, allowed);
    Ok((tape.value(out).clone(), tape.value(w).clone()))
}

/// Multi-head attention with one value projection shared by all heads, so
/// the head-averaged weights describe a single mixing of the values.
#[derive(Debug, Clone)]
pub struct InterpretableMultiHead {
    pub queries: Vec<ParamId>,
    pub keys: Vec<ParamId>,
    pub value: ParamId,
    pub output: ParamId,
    pub d_model: usize,
    pub d_attn: usize,
}

impl InterpretableMultiHead {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut SeededRng) -> Self {
        let d_attn = d_model / heads;
        let queries = (0..heads).map(|h| store.add_weight(format!("{name}.q{h}"), d_model, d_attn, rng)).collect();
        let keys = (0..heads).map(|h| store.add_weight(format!("{name}.k{h}"), d_model, d_attn, rng)).collect();
        let value = store.add_weight(format!("{name}.v"), d_model, d_attn, rng);
        let output = store.add_weight(format!("{name}.h"), d_attn, d_model, rng);
        Self { queries, keys, value, output, d_model, d_attn }
    }

    pub fn heads(&self) -> usize {
        self.queries.len()
    }

    /// Returns `H̃·W_H` and the head-averaged attention matrix.
    pub fn forward(&self, ctx: &mut Ctx, q: Var, k: Var, v: Var, allowed: Option<&[bool]>) -> (Var, Var) {
        let wv = ctx.param(self.value);
        let vp = ctx.tape.matmul(v, wv);
        let scale = 1.0 / self.heads() as f64;
        let mut sum_h: Option<Var> = None;
        let mut sum_a: Option<Var> = None;
        for (wq, wk) in self.queries.iter().zip(&self.keys) {
            let wq = ctx.param(*wq);
            let wk = ctx.param(*wk);
            let qh = ctx.tape.matmul(q, wq);
            let kh = ctx.tape.matmul(k, wk);
            let (h, a) = attention(ctx.tape, qh, kh, vp, allowed);
            sum_h = Some(match sum_h {
                None => h,
                Some(s) => ctx.tape.add(s, h),
            });
            sum_a = Some(match sum_a {
                None => a,
                Some(s) => ctx.tape.add(s, a),
            });
        }
        let h_tilde = ctx.tape.scale(sum_h.expect("at least one head"), scale);
        let a_tilde = ctx.tape.scale(sum_a.expect("at least one head"), scale);
        let wh = ctx.param(self.output);
        (ctx.tape.matmul(h_tilde, wh), a_tilde)
    }

    pub fn eval(&self, store: &ParamStore, q: &Tensor, k: &Tensor, v: &Tensor, allowed: Option<&[bool]>) -> Result<(Tensor, Tensor)> {
        check_cols("multihead query", q, self.d_model)?;
        check_cols("multihead key", k, self.d_model)?;
        check_cols("multihead value", v, self.d_model)?;
        if k.rows != v.rows {
            return Err(Error::Shape("keys and values need equal row counts".into()));
        }
        if let Some(m) = allowed {
            if m.len() != q.rows * k.rows {
                return Err(Error::Shape("attention mask size".into()));
            }
        }
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, store);
        let (qv, kv, vv) = (ctx.constant(q.clone()), ctx.constant(k.clone()), ctx.constant(v.clone()));
        let (out, a) = self.forward(&mut ctx, qv, kv, vv, allowed);
        Ok((ctx.value(out).clone(), ctx.value(a).clone()))
    }
}
