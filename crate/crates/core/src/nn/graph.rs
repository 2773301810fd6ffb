use alloc::vec;
use alloc::vec::Vec;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::rng::{self, StdRng};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

enum Op {
    Param(ParamId),
    Constant,
    Embed { table: ParamId, ids: Vec<u32> },
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    SelfAttention { qkv: Var, heads: usize, probs: Vec<f64> },
    Row(Var, usize),
    StackRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SoftmaxAll(Var),
    Transpose(Var),
    Dropout(Var, Vec<f64>),
    CrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of one forward pass.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    dropout: Option<(f64, StdRng)>,
}

impl<'p> Graph<'p> {
    /// Inference graph: dropout is the identity.
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_nodes: vec![None; store.len()], dropout: None }
    }

    /// Training graph with inverted dropout of rate `p`.
    pub fn training(store: &'p ParamStore, p: f64, seed: u64) -> Self {
        let mut g = Self::new(store);
        if p > 0.0 {
            g.dropout = Some((p, rng::seeded(seed)));
        }
        g
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.store.get(*id),
            _ => &self.nodes[v.0].value,
        }
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let v = self.push(Tensor::default(), Op::Param(id));
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Rows of an embedding table.
    pub fn embed(&mut self, table: ParamId, ids: &[u32]) -> Var {
        let t = self.store.get(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id as usize));
        }
        self.push(out, Op::Embed { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions differ");
        let mut out = Tensor::zeros(m, n);
        matmul_acc(&self.value(a).data, &self.value(b).data, &mut out.data, m, k, n);
        self.push(out, Op::MatMul(a, b))
    }

    /// `x + bias` with a 1-row bias broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let mut out = self.value(x).clone();
        let b = self.value(bias);
        assert_eq!(b.shape(), (1, out.cols), "bias shape");
        for r in 0..out.rows {
            for (o, bv) in out.row_mut(r).iter_mut().zip(&b.data) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let mut out = self.value(a).clone();
        for (o, bv) in out.data.iter_mut().zip(&self.value(b).data) {
            *o *= bv;
        }
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(a, s))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = self.value(a);
        Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|&v| f(v)).collect())
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, libm::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, |v| 1.0 / (1.0 + libm::exp(-v)));
        self.push(out, Op::Sigmoid(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| 0.5 * x * (1.0 + libm::tanh(GELU_C * (x + 0.044_715 * x * x * x))));
        self.push(out, Op::Gelu(a))
    }

    /// Row-wise layer normalisation with 1-row gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = &self.value(gain).data;
        let b = &self.value(bias).data;
        let mut out = Tensor::zeros(rows, cols);
        let mut xhat = vec![0.0; rows * cols];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / libm::sqrt(var + LN_EPS);
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = h * g[c] + b[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    /// Multi-head scaled dot-product self-attention over a packed
    /// `[T x 3d]` query/key/value matrix; returns `[T x d]`.
    pub fn self_attention(&mut self, qkv: Var, heads: usize) -> Var {
        let v = self.value(qkv);
        let (t, three_d) = v.shape();
        let d = three_d / 3;
        assert!(three_d == 3 * d && d % heads == 0, "qkv width must be 3d with d divisible by heads");
        let dh = d / heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut out = Tensor::zeros(t, d);
        let mut probs = vec![0.0; heads * t * t];
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for i in 0..t {
                let q = &v.row(i)[qo..qo + dh];
                let p = &mut probs[(h * t + i) * t..(h * t + i + 1) * t];
                let mut max = f64::NEG_INFINITY;
                for j in 0..t {
                    let k = &v.row(j)[ko..ko + dh];
                    let s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                    p[j] = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for pj in p.iter_mut() {
                    *pj = libm::exp(*pj - max);
                    z += *pj;
                }
                for pj in p.iter_mut() {
                    *pj /= z;
                }
                let orow = &mut out.data[i * d + qo..i * d + qo + dh];
                for j in 0..t {
                    let vv = &v.row(j)[vo..vo + dh];
                    for (o, x) in orow.iter_mut().zip(vv) {
                        *o += p[j] * x;
                    }
                }
            }
        }
        self.push(out, Op::SelfAttention { qkv, heads, probs })
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        let out = Tensor::row_vector(self.value(a).row(r).to_vec());
        self.push(out, Op::Row(a, r))
    }

    /// Stacks 1-row values into a matrix; a handle may repeat.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack of zero rows");
        let cols = self.shape(rows[0]).1;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = self.value(r);
            assert_eq!(t.shape(), (1, cols), "stack_rows expects equal-width row vectors");
            data.extend_from_slice(&t.data);
        }
        self.push(Tensor::from_vec(rows.len(), cols, data), Op::StackRows(rows.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of zero parts");
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows, rows, "concat_cols row counts differ");
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
                off += t.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols, "column slice out of range");
        let mut out = Tensor::zeros(t.rows, len);
        for r in 0..t.rows {
            out.row_mut(r).copy_from_slice(&t.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    /// Softmax over every entry of `a`.
    pub fn softmax_all(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let max = x.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut data: Vec<f64> = x.data.iter().map(|&v| libm::exp(v - max)).collect();
        let z: f64 = data.iter().sum();
        data.iter_mut().for_each(|v| *v /= z);
        let out = Tensor::from_vec(x.rows, x.cols, data);
        self.push(out, Op::SoftmaxAll(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.cols, x.rows);
        for r in 0..x.rows {
            for c in 0..x.cols {
                out.data[c * x.rows + r] = x.data[r * x.cols + c];
            }
        }
        self.push(out, Op::Transpose(a))
    }

    /// Inverted dropout; identity on inference graphs.
    pub fn dropout(&mut self, a: Var) -> Var {
        let n = self.nodes_len_of(a);
        let Some((p, rng)) = self.dropout.as_mut() else {
            return a;
        };
        let p = *p;
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..n).map(|_| if rng::bernoulli(rng, p) { 0.0 } else { keep }).collect();
        let mut out = self.value(a).clone();
        for (o, m) in out.data.iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Dropout(a, mask))
    }

    fn nodes_len_of(&self, a: Var) -> usize {
        self.value(a).len()
    }

    /// Negative log-likelihood of `target` under softmax of 1-row `logits`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let probs = softmax(&self.value(logits).data);
        let loss = -libm::log(probs[target].max(f64::MIN_POSITIVE));
        self.push(Tensor::from_vec(1, 1, vec![loss]), Op::CrossEntropy { logits, target, probs })
    }

    /// Accumulates d`output`/d(parameter) into `grads`, for every trainable
    /// parameter reached. `output` must be a 1x1 node.
    pub fn backward(&self, output: Var, grads: &mut Gradients) {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        g[output.0] = Some(Tensor::from_vec(1, 1, vec![1.0]));

        for i in (0..=output.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Param(id) => {
                    if self.store.is_trainable(*id) {
                        grads.get_mut(*id).add_assign(&gi);
                    }
                }
                Op::Constant => {}
                Op::Embed { table, ids } => {
                    if self.store.is_trainable(*table) {
                        let gt = grads.get_mut(*table);
                        for (r, &id) in ids.iter().enumerate() {
                            for (a, b) in gt.row_mut(id as usize).iter_mut().zip(gi.row(r)) {
                                *a += b;
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = self.shape(*b).1;
                    let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                    self.acc(&mut g, *a, |ga| matmul_nt_acc(&gi.data, bv, &mut ga.data, m, n, k));
                    self.acc(&mut g, *b, |gb| matmul_tn_acc(av, &gi.data, &mut gb.data, m, k, n));
                }
                Op::AddRow(x, bias) => {
                    self.acc(&mut g, *x, |gx| gx.add_assign(&gi));
                    self.acc(&mut g, *bias, |gb| {
                        for r in 0..gi.rows {
                            for (a, b) in gb.data.iter_mut().zip(gi.row(r)) {
                                *a += b;
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    self.acc(&mut g, *a, |ga| ga.add_assign(&gi));
                    self.acc(&mut g, *b, |gb| gb.add_assign(&gi));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.acc(&mut g, *a, |ga| {
                        for ((o, gv), x) in ga.data.iter_mut().zip(&gi.data).zip(&bv.data) {
                            *o += gv * x;
                        }
                    });
                    self.acc(&mut g, *b, |gb| {
                        for ((o, gv), x) in gb.data.iter_mut().zip(&gi.data).zip(&av.data) {
                            *o += gv * x;
                        }
                    });
                }
                Op::Scale(a, s) => {
                    self.acc(&mut g, *a, |ga| {
                        for (o, gv) in ga.data.iter_mut().zip(&gi.data) {
                            *o += gv * s;
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value.data;
                    self.acc(&mut g, *a, |ga| {
                        for ((o, gv), y) in ga.data.iter_mut().zip(&gi.data).zip(y) {
                            *o += gv * (1.0 - y * y);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value.data;
                    self.acc(&mut g, *a, |ga| {
                        for ((o, gv), y) in ga.data.iter_mut().zip(&gi.data).zip(y) {
                            *o += gv * y * (1.0 - y);
                        }
                    });
                }
                Op::Gelu(a) => {
                    let x = &self.value(*a).data;
                    self.acc(&mut g, *a, |ga| {
                        for ((o, gv), &x) in ga.data.iter_mut().zip(&gi.data).zip(x) {
                            let u = GELU_C * (x + 0.044_715 * x * x * x);
                            let th = libm::tanh(u);
                            let du = GELU_C * (1.0 + 3.0 * 0.044_715 * x * x);
                            *o += gv * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
                        }
                    });
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let (rows, cols) = gi.shape();
                    let gamma = &self.value(*gain).data;
                    self.acc(&mut g, *gain, |gg| {
                        for r in 0..rows {
                            for c in 0..cols {
                                gg.data[c] += gi.data[r * cols + c] * xhat[r * cols + c];
                            }
                        }
                    });
                    self.acc(&mut g, *bias, |gb| {
                        for r in 0..rows {
                            for (a, b) in gb.data.iter_mut().zip(gi.row(r)) {
                                *a += b;
                            }
                        }
                    });
                    self.acc(&mut g, *x, |gx| {
                        let n = cols as f64;
                        let mut dxhat = vec![0.0; cols];
                        for r in 0..rows {
                            let xh = &xhat[r * cols..(r + 1) * cols];
                            let mut sum = 0.0;
                            let mut dot = 0.0;
                            for c in 0..cols {
                                dxhat[c] = gi.data[r * cols + c] * gamma[c];
                                sum += dxhat[c];
                                dot += dxhat[c] * xh[c];
                            }
                            for c in 0..cols {
                                gx.data[r * cols + c] += rstd[r] / n * (n * dxhat[c] - sum - xh[c] * dot);
                            }
                        }
                    });
                }
                Op::SelfAttention { qkv, heads, probs } => {
                    let v = self.value(*qkv);
                    let (t, three_d) = v.shape();
                    let d = three_d / 3;
                    let dh = d / heads;
                    let scale = 1.0 / libm::sqrt(dh as f64);
                    self.acc(&mut g, *qkv, |gq| {
                        let mut dp = vec![0.0; t];
                        for h in 0..*heads {
                            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                            for i2 in 0..t {
                                let p = &probs[(h * t + i2) * t..(h * t + i2 + 1) * t];
                                let go = &gi.row(i2)[qo..qo + dh];
                                // dP and dV
                                let mut dot = 0.0;
                                for j in 0..t {
                                    let vv = &v.row(j)[vo..vo + dh];
                                    dp[j] = go.iter().zip(vv).map(|(a, b)| a * b).sum();
                                    dot += dp[j] * p[j];
                                    let gv = &mut gq.data[j * three_d + vo..j * three_d + vo + dh];
                                    for (o, x) in gv.iter_mut().zip(go) {
                                        *o += p[j] * x;
                                    }
                                }
                                // dS = P * (dP - <dP, P>)
                                for j in 0..t {
                                    let ds = p[j] * (dp[j] - dot) * scale;
                                    if ds == 0.0 {
                                        continue;
                                    }
                                    for c in 0..dh {
                                        let kj = v.data[j * three_d + ko + c];
                                        let qi = v.data[i2 * three_d + qo + c];
                                        gq.data[i2 * three_d + qo + c] += ds * kj;
                                        gq.data[j * three_d + ko + c] += ds * qi;
                                    }
                                }
                            }
                        }
                    });
                }
                Op::Row(a, r) => {
                    self.acc(&mut g, *a, |ga| {
                        for (o, x) in ga.row_mut(*r).iter_mut().zip(&gi.data) {
                            *o += x;
                        }
                    });
                }
                Op::StackRows(rows) => {
                    for (r, &v) in rows.iter().enumerate() {
                        self.acc(&mut g, v, |gv| {
                            for (o, x) in gv.data.iter_mut().zip(gi.row(r)) {
                                *o += x;
                            }
                        });
                    }
                }
                Op::ConcatCols(parts) => {
                    let cols = gi.cols;
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.shape(p).1;
                        self.acc(&mut g, p, |gp| {
                            for r in 0..gi.rows {
                                for c in 0..pc {
                                    gp.data[r * pc + c] += gi.data[r * cols + off + c];
                                }
                            }
                        });
                        off += pc;
                    }
                }
                Op::SliceCols(a, start) => {
                    let len = gi.cols;
                    self.acc(&mut g, *a, |ga| {
                        for r in 0..gi.rows {
                            for (o, x) in ga.row_mut(r)[*start..*start + len].iter_mut().zip(gi.row(r)) {
                                *o += x;
                            }
                        }
                    });
                }
                Op::SoftmaxAll(a) => {
                    let y = &self.nodes[i].value.data;
                    let dot: f64 = gi.data.iter().zip(y).map(|(a, b)| a * b).sum();
                    self.acc(&mut g, *a, |ga| {
                        for ((o, gv), y) in ga.data.iter_mut().zip(&gi.data).zip(y) {
                            *o += y * (gv - dot);
                        }
                    });
                }
                Op::Transpose(a) => {
                    let (rows, cols) = self.shape(*a);
                    self.acc(&mut g, *a, |ga| {
                        for r in 0..rows {
                            for c in 0..cols {
                                ga.data[r * cols + c] += gi.data[c * rows + r];
                            }
                        }
                    });
                }
                Op::Dropout(a, mask) => {
                    self.acc(&mut g, *a, |ga| {
                        for ((o, gv), m) in ga.data.iter_mut().zip(&gi.data).zip(mask) {
                            *o += gv * m;
                        }
                    });
                }
                Op::CrossEntropy { logits, target, probs } => {
                    let s = gi.data[0];
                    self.acc(&mut g, *logits, |gl| {
                        for (c, (o, p)) in gl.data.iter_mut().zip(probs).enumerate() {
                            let y = if c == *target { 1.0 } else { 0.0 };
                            *o += s * (p - y);
                        }
                    });
                }
            }
        }
    }

    fn acc(&self, g: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.needs_grad(v) {
            return;
        }
        let slot = &mut g[v.0];
        if slot.is_none() {
            let (r, c) = self.shape(v);
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().unwrap());
    }

    fn needs_grad(&self, v: Var) -> bool {
        match &self.nodes[v.0].op {
            Op::Constant => false,
            Op::Param(id) => self.store.is_trainable(*id),
            _ => true,
        }
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = x.iter().map(|&v| libm::exp(v - max)).collect();
    let z: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= z);
    e
}
