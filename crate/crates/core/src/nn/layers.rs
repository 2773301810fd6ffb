use alloc::format;
use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::rng::{self, StdRng};

fn xavier(rows: usize, cols: usize, rng: &mut StdRng) -> Tensor {
    let a = libm::sqrt(6.0 / (rows + cols) as f64);
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| (2.0 * rng::unit(rng) - 1.0) * a).collect())
}

fn gaussian(rows: usize, cols: usize, sd: f64, rng: &mut StdRng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng::normal(rng) * sd).collect())
}

/// Affine map `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut StdRng) -> Self {
        let w = store.add(format!("{name}.weight"), xavier(inp, out, rng), true);
        let b = store.add(format!("{name}.bias"), Tensor::zeros(1, out), false);
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        let b = g.param(self.b);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let mut ones = Tensor::zeros(1, dim);
        ones.fill(1.0);
        let gain = store.add(format!("{name}.gain"), ones, false);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, dim), false);
        Self { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias)
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: LayerNorm,
    qkv: Linear,
    out: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Pre-norm transformer encoder over token ids; exposes the CLS vector.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    tok: ParamId,
    pos: ParamId,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    heads: usize,
    max_len: usize,
}

impl TransformerEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        vocab: usize,
        dim: usize,
        heads: usize,
        layers: usize,
        max_len: usize,
        rng: &mut StdRng,
    ) -> Self {
        assert!(dim % heads == 0, "model dimension must be divisible by the head count");
        let tok = store.add(format!("{prefix}.tok_emb"), gaussian(vocab, dim, 0.1, rng), true);
        let pos = store.add(format!("{prefix}.pos_emb"), gaussian(max_len, dim, 0.1, rng), true);
        let blocks = (0..layers)
            .map(|l| {
                let p = format!("{prefix}.layer{l}");
                Block {
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), dim),
                    qkv: Linear::new(store, &format!("{p}.qkv"), dim, 3 * dim, rng),
                    out: Linear::new(store, &format!("{p}.attn_out"), dim, dim, rng),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), dim),
                    ff1: Linear::new(store, &format!("{p}.ff1"), dim, 4 * dim, rng),
                    ff2: Linear::new(store, &format!("{p}.ff2"), 4 * dim, dim, rng),
                }
            })
            .collect();
        let ln_f = LayerNorm::new(store, &format!("{prefix}.ln_f"), dim);
        Self { tok, pos, blocks, ln_f, heads, max_len }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Output at position 0 for `ids` (which must start with CLS and fit the
    /// positional table).
    pub fn forward_cls(&self, g: &mut Graph, ids: &[u32]) -> Var {
        assert!(!ids.is_empty() && ids.len() <= self.max_len, "token sequence does not fit the encoder");
        let positions: Vec<u32> = (0..ids.len() as u32).collect();
        let tok = g.embed(self.tok, ids);
        let pos = g.embed(self.pos, &positions);
        let mut x = g.add(tok, pos);
        x = g.dropout(x);
        for b in &self.blocks {
            let h = b.ln1.forward(g, x);
            let qkv = b.qkv.forward(g, h);
            let a = g.self_attention(qkv, self.heads);
            let o = b.out.forward(g, a);
            let o = g.dropout(o);
            x = g.add(x, o);
            let h = b.ln2.forward(g, x);
            let f = b.ff1.forward(g, h);
            let f = g.gelu(f);
            let f = b.ff2.forward(g, f);
            let f = g.dropout(f);
            x = g.add(x, f);
        }
        let x = self.ln_f.forward(g, x);
        g.row(x, 0)
    }
}

/// Single-direction LSTM with masked steps.
#[derive(Debug, Clone)]
pub struct Lstm {
    input: Linear,
    recurrent: ParamId,
    hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, hidden: usize, rng: &mut StdRng) -> Self {
        let input = Linear::new(store, &format!("{name}.input"), inp, 4 * hidden, rng);
        // Forget-gate bias starts at 1.
        store.get_mut(input.b).data[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let recurrent = store.add(format!("{name}.recurrent"), xavier(hidden, 4 * hidden, rng), true);
        Self { input, recurrent, hidden }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Runs over the rows of `x` (`[T x in]`). A masked step leaves the state
    /// untouched and yields `None`.
    pub fn run(&self, g: &mut Graph, x: Var, valid: &[bool], reverse: bool) -> Vec<Option<Var>> {
        let t_len = valid.len();
        let h = self.hidden;
        let xw = self.input.forward(g, x);
        let mut out = alloc::vec![None; t_len];
        let mut state: Option<(Var, Var)> = None;
        let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
        for t in order {
            if !valid[t] {
                continue;
            }
            let mut z = g.row(xw, t);
            if let Some((h_prev, _)) = state {
                let wh = g.param(self.recurrent);
                let r = g.matmul(h_prev, wh);
                z = g.add(z, r);
            }
            let i_pre = g.slice_cols(z, 0, h);
            let f_pre = g.slice_cols(z, h, h);
            let c_pre = g.slice_cols(z, 2 * h, h);
            let o_pre = g.slice_cols(z, 3 * h, h);
            let i = g.sigmoid(i_pre);
            let o = g.sigmoid(o_pre);
            let cand = g.tanh(c_pre);
            let mut c = g.mul(i, cand);
            if let Some((_, c_prev)) = state {
                let f = g.sigmoid(f_pre);
                let keep = g.mul(f, c_prev);
                c = g.add(c, keep);
            }
            let tc = g.tanh(c);
            let h_new = g.mul(o, tc);
            state = Some((h_new, c));
            out[t] = Some(h_new);
        }
        out
    }
}

/// Bidirectional LSTM; each valid step yields `[h_forward, h_backward]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    fwd: Lstm,
    bwd: Lstm,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, hidden: usize, rng: &mut StdRng) -> Self {
        Self {
            fwd: Lstm::new(store, &format!("{name}.fwd"), inp, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), inp, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden()
    }

    /// Outputs for the valid slots, in slot order.
    pub fn run(&self, g: &mut Graph, x: Var, valid: &[bool]) -> Vec<Var> {
        let f = self.fwd.run(g, x, valid, false);
        let b = self.bwd.run(g, x, valid, true);
        f.into_iter()
            .zip(b)
            .filter_map(|(f, b)| match (f, b) {
                (Some(f), Some(b)) => Some(g.concat_cols(&[f, b])),
                _ => None,
            })
            .collect()
    }
}

/// Additive attention `a_t = softmax_t(v^T tanh(W h_t + b))` followed by
/// pooling of the weighted steps.
#[derive(Debug, Clone)]
pub struct AttentionPool {
    proj: Linear,
    v: ParamId,
}

impl AttentionPool {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, attn: usize, rng: &mut StdRng) -> Self {
        let proj = Linear::new(store, &format!("{name}.proj"), inp, attn, rng);
        let v = store.add(format!("{name}.v"), xavier(attn, 1, rng), true);
        Self { proj, v }
    }

    /// `steps` is `[T x in]`. With `mean`, the weighted steps are averaged
    /// (divided by T); otherwise they are summed.
    pub fn forward(&self, g: &mut Graph, steps: Var, mean: bool) -> Var {
        let t = g.value(steps).rows;
        let u = self.proj.forward(g, steps);
        let u = g.tanh(u);
        let v = g.param(self.v);
        let scores = g.matmul(u, v);
        let alpha = g.softmax_all(scores);
        let at = g.transpose(alpha);
        let pooled = g.matmul(at, steps);
        if mean {
            g.scale(pooled, 1.0 / t as f64)
        } else {
            pooled
        }
    }
}
