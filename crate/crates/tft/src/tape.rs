//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records each operation with its value. [`Tape::backward`] walks
//! the record in reverse and returns the gradient of a scalar node with respect
//! to every earlier node.

use crate::params::ParamId;
use crate::tensor::{matmul_nt_into, matmul_tn_into, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Adds a `1 × cols` row to every row.
    AddRow(Var, Var),
    Mul(Var, Var),
    /// Scales row `i` by entry `i` of a `rows × 1` column.
    MulCol(Var, Var),
    /// Elementwise product with a fixed tensor (dropout masks).
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Elu(Var),
    /// Row-wise softmax; masked entries get weight exactly zero.
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, normed: Tensor, inv_std: Vec<f64> },
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    /// Sum of the entries weighted by a fixed tensor; a `1 × 1` result.
    Dot(Var, Tensor),
    /// Pinball loss summed over quantiles and averaged over horizon rows.
    QuantileLoss { pred: Var, target: Vec<f64>, quantiles: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn push_or_add(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Param(id))
    }

    /// Parameter ids with their gradients, in tape order. A parameter used
    /// more than once appears once per use.
    pub fn param_grads<'a>(&'a self, grads: &'a Gradients) -> impl Iterator<Item = (ParamId, &'a Tensor)> + 'a {
        self.nodes.iter().enumerate().filter_map(move |(i, n)| match n.op {
            Op::Param(id) => grads.grads[i].as_ref().map(|g| (id, g)),
            _ => None,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect();
        let v = Tensor { rows: x.rows, cols: x.cols, data };
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "sub");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p - q).collect();
        let v = Tensor { rows: x.rows, cols: x.cols, data };
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.rows == 1 && r.cols == x.cols, "add_row {:?} + {:?}", x.shape(), r.shape());
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let v = Tensor { rows: x.rows, cols: x.cols, data };
        self.push(v, Op::Mul(a, b))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (x, c) = (self.value(a), self.value(col));
        assert!(c.cols == 1 && c.rows == x.rows, "mul_col {:?} * {:?}", x.shape(), c.shape());
        let mut v = x.clone();
        for i in 0..v.rows {
            let s = c.data[i];
            v.row_mut(i).iter_mut().for_each(|o| *o *= s);
        }
        self.push(v, Op::MulCol(a, col))
    }

    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), mask.shape(), "mul_const");
        let data = x.data.iter().zip(&mask.data).map(|(p, q)| p * q).collect();
        let v = Tensor { rows: x.rows, cols: x.cols, data };
        self.push(v, Op::MulConst(a, mask))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(elu);
        self.push(v, Op::Elu(a))
    }

    /// Row-wise softmax. `allowed`, when given, is a row-major boolean mask of
    /// the same shape; every row needs at least one allowed entry.
    pub fn softmax(&mut self, a: Var, allowed: Option<&[bool]>) -> Var {
        let x = self.value(a);
        if let Some(m) = allowed {
            assert_eq!(m.len(), x.len(), "softmax mask");
        }
        let mut v = Tensor::zeros(x.rows, x.cols);
        for i in 0..x.rows {
            let ok = |j: usize| allowed.map_or(true, |m| m[i * x.cols + j]);
            let row = x.row(i);
            let max = (0..x.cols).filter(|&j| ok(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            assert!(max > f64::NEG_INFINITY || max.is_nan(), "softmax row {i} fully masked");
            let out = v.row_mut(i);
            let mut total = 0.0;
            for j in 0..x.cols {
                if ok(j) {
                    out[j] = (row[j] - max).exp();
                    total += out[j];
                }
            }
            out.iter_mut().for_each(|o| *o /= total);
        }
        self.push(v, Op::Softmax(a))
    }

    /// Row-wise layer normalisation with a learned `1 × cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        assert!(g.shape() == (1, xv.cols) && b.shape() == (1, xv.cols), "layer_norm affine shape");
        let n = xv.cols as f64;
        let mut normed = Tensor::zeros(xv.rows, xv.cols);
        let mut out = Tensor::zeros(xv.rows, xv.cols);
        let mut inv_std = Vec::with_capacity(xv.rows);
        for i in 0..xv.rows {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(s);
            for j in 0..xv.cols {
                let h = (row[j] - mean) * s;
                normed.set(i, j, h);
                out.set(i, j, h * g.data[j] + b.data[j]);
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, normed, inv_std })
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows, "slice_rows");
        let v = Tensor { rows: len, cols: x.cols, data: x.data[start * x.cols..(start + len) * x.cols].to_vec() };
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "slice_cols");
        let mut v = Tensor::zeros(x.rows, len);
        for i in 0..x.rows {
            v.row_mut(i).copy_from_slice(&x.row(i)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols, cols, "concat_rows");
            data.extend_from_slice(&t.data);
            rows += t.rows;
        }
        self.push(Tensor { rows, cols, data }, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat_cols");
            for i in 0..rows {
                v.row_mut(i)[offset..offset + t.cols].copy_from_slice(t.row(i));
            }
            offset += t.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn dot(&mut self, a: Var, weights: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), weights.shape(), "dot");
        let s = x.data.iter().zip(&weights.data).map(|(p, q)| p * q).sum();
        self.push(Tensor::row_vector(vec![s]), Op::Dot(a, weights))
    }

    /// `pred` is `horizon × quantiles`; `target` has one value per horizon row.
    pub fn quantile_loss(&mut self, pred: Var, target: &[f64], quantiles: &[f64]) -> Var {
        let p = self.value(pred);
        assert!(p.rows == target.len() && p.cols == quantiles.len(), "quantile_loss shape");
        let mut total = 0.0;
        for (t, y) in target.iter().enumerate() {
            for (k, q) in quantiles.iter().enumerate() {
                total += crate::loss::pinball(*y, p.get(t, k), *q);
            }
        }
        let v = Tensor::row_vector(vec![total / target.len() as f64]);
        self.push(v, Op::QuantileLoss { pred, target: target.to_vec(), quantiles: quantiles.to_vec() })
    }

    /// Gradients of the `1 × 1` node `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::filled(1, 1, 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let like = |v: Var| Tensor::zeros(self.nodes[v.0].value.rows, self.nodes[v.0].value.cols);
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = like(*a);
                matmul_nt_into(g, bv, &mut ga);
                let mut gb = like(*b);
                matmul_tn_into(av, g, &mut gb);
                push_or_add(&mut grads[a.0], ga);
                push_or_add(&mut grads[b.0], gb);
            }
            Op::Add(a, b) => {
                push_or_add(&mut grads[a.0], g.clone());
                push_or_add(&mut grads[b.0], g.clone());
            }
            Op::Sub(a, b) => {
                push_or_add(&mut grads[a.0], g.clone());
                push_or_add(&mut grads[b.0], g.map(|v| -v));
            }
            Op::AddRow(a, r) => {
                let mut gr = like(*r);
                for row in 0..g.rows {
                    for (o, v) in gr.data.iter_mut().zip(g.row(row)) {
                        *o += v;
                    }
                }
                push_or_add(&mut grads[a.0], g.clone());
                push_or_add(&mut grads[r.0], gr);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().zip(&bv.data).map(|(p, q)| p * q).collect() };
                let gb = Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().zip(&av.data).map(|(p, q)| p * q).collect() };
                push_or_add(&mut grads[a.0], ga);
                push_or_add(&mut grads[b.0], gb);
            }
            Op::MulCol(a, c) => {
                let (av, cv) = (self.value(*a), self.value(*c));
                let mut ga = g.clone();
                let mut gc = like(*c);
                for row in 0..g.rows {
                    let s = cv.data[row];
                    ga.row_mut(row).iter_mut().for_each(|o| *o *= s);
                    gc.data[row] = g.row(row).iter().zip(av.row(row)).map(|(p, q)| p * q).sum();
                }
                push_or_add(&mut grads[a.0], ga);
                push_or_add(&mut grads[c.0], gc);
            }
            Op::MulConst(a, m) => {
                let ga = Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().zip(&m.data).map(|(p, q)| p * q).collect() };
                push_or_add(&mut grads[a.0], ga);
            }
            Op::Scale(a, s) => push_or_add(&mut grads[a.0], g.map(|v| v * s)),
            Op::Sigmoid(a) => {
                let data = g.data.iter().zip(&out.data).map(|(gv, y)| gv * y * (1.0 - y)).collect();
                push_or_add(&mut grads[a.0], Tensor { rows: g.rows, cols: g.cols, data });
            }
            Op::Tanh(a) => {
                let data = g.data.iter().zip(&out.data).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                push_or_add(&mut grads[a.0], Tensor { rows: g.rows, cols: g.cols, data });
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                let data = g
                    .data
                    .iter()
                    .zip(&x.data)
                    .zip(&out.data)
                    .map(|((gv, xv), y)| if *xv > 0.0 { *gv } else { gv * (y + 1.0) })
                    .collect();
                push_or_add(&mut grads[a.0], Tensor { rows: g.rows, cols: g.cols, data });
            }
            Op::Softmax(a) => {
                let mut ga = like(*a);
                for row in 0..g.rows {
                    let (y, gy) = (out.row(row), g.row(row));
                    let inner: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                    for (j, o) in ga.row_mut(row).iter_mut().enumerate() {
                        *o = y[j] * (gy[j] - inner);
                    }
                }
                push_or_add(&mut grads[a.0], ga);
            }
            Op::LayerNorm { x, gain, bias, normed, inv_std } => {
                let gv = self.value(*gain);
                let n = g.cols as f64;
                let mut gx = like(*x);
                let mut gg = like(*gain);
                let mut gb = like(*bias);
                for row in 0..g.rows {
                    let (gy, h) = (g.row(row), normed.row(row));
                    let mut dh = vec![0.0; g.cols];
                    for j in 0..g.cols {
                        gg.data[j] += gy[j] * h[j];
                        gb.data[j] += gy[j];
                        dh[j] = gy[j] * gv.data[j];
                    }
                    let mean_dh = dh.iter().sum::<f64>() / n;
                    let mean_dh_h = dh.iter().zip(h).map(|(p, q)| p * q).sum::<f64>() / n;
                    for (j, o) in gx.row_mut(row).iter_mut().enumerate() {
                        *o = inv_std[row] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                    }
                }
                push_or_add(&mut grads[x.0], gx);
                push_or_add(&mut grads[gain.0], gg);
                push_or_add(&mut grads[bias.0], gb);
            }
            Op::SliceRows(a, start) => {
                let mut ga = like(*a);
                let c = ga.cols;
                ga.data[start * c..(start + g.rows) * c].copy_from_slice(&g.data);
                push_or_add(&mut grads[a.0], ga);
            }
            Op::SliceCols(a, start) => {
                let mut ga = like(*a);
                for row in 0..g.rows {
                    ga.row_mut(row)[*start..start + g.cols].copy_from_slice(g.row(row));
                }
                push_or_add(&mut grads[a.0], ga);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    let n = t.len();
                    let gp = Tensor { rows: t.rows, cols: t.cols, data: g.data[offset..offset + n].to_vec() };
                    offset += n;
                    push_or_add(&mut grads[p.0], gp);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    let mut gp = Tensor::zeros(t.rows, t.cols);
                    for row in 0..t.rows {
                        gp.row_mut(row).copy_from_slice(&g.row(row)[offset..offset + t.cols]);
                    }
                    offset += t.cols;
                    push_or_add(&mut grads[p.0], gp);
                }
            }
            Op::Transpose(a) => push_or_add(&mut grads[a.0], g.transpose()),
            Op::Dot(a, w) => {
                let s = g.data[0];
                push_or_add(&mut grads[a.0], w.map(|v| v * s));
            }
            Op::QuantileLoss { pred, target, quantiles } => {
                let p = self.value(*pred);
                let s = g.data[0] / target.len() as f64;
                let mut gp = like(*pred);
                for (t, y) in target.iter().enumerate() {
                    for (k, q) in quantiles.iter().enumerate() {
                        let yh = p.get(t, k);
                        let d = if *y > yh {
                            -q
                        } else if yh > *y {
                            1.0 - q
                        } else {
                            0.0
                        };
                        gp.set(t, k, s * d);
                    }
                }
                push_or_add(&mut grads[pred.0], gp);
            }
        }
    }
}
