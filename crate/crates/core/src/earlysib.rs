//! The two-branch early prediction model.
//!
//! Body branch: every interaction in the context is encoded on its own
//! (CLS vector of the body encoder), the sequence runs through a
//! bidirectional LSTM, and additive attention pools the steps. Title+tag
//! branch: all titles and tags of the context are joined into one string
//! and encoded once. The enabled branch outputs are concatenated and fed to
//! a two-layer head producing two logits.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, Interaction, Kind, Label};
use crate::error::{Error, Result};
use crate::nn::{AttentionPool, BiLstm, Gradients, Graph, Linear, ParamStore, Tensor, TransformerEncoder, Var};
use crate::rng;
use crate::text::{words, HashingTokenizer, CLS, SEP};
use crate::userset::ContextConfig;

/// Shape of a token encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EncoderSpec {
    pub vocab_size: u32,
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    /// Including the CLS token.
    pub max_tokens: usize,
    pub trainable: bool,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self { vocab_size: 8192, layers: 2, heads: 4, dim: 128, max_tokens: 128, trainable: true }
    }
}

impl EncoderSpec {
    pub fn validate(&self, what: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(alloc::format!("{what} encoder: {m}")));
        if self.heads == 0 || self.dim == 0 || self.dim % self.heads != 0 {
            return bad("dim must be a positive multiple of heads");
        }
        if self.max_tokens < 2 {
            return bad("max_tokens must leave room for CLS");
        }
        if self.vocab_size <= crate::text::RESERVED {
            return bad("vocabulary too small");
        }
        Ok(())
    }

    fn build(&self, store: &mut ParamStore, prefix: &str, max_len: usize, rng: &mut rng::StdRng) -> TransformerEncoder {
        let enc = TransformerEncoder::new(
            store,
            prefix,
            self.vocab_size as usize,
            self.dim,
            self.heads,
            self.layers,
            max_len,
            rng,
        );
        if !self.trainable {
            store.set_trainable(prefix, false);
        }
        enc
    }
}

/// How attention-weighted steps are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Pooling {
    /// Mean over steps of `a_t h_t`.
    #[default]
    Mean,
    /// Sum over steps of `a_t h_t`.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ModelConfig {
    pub body: EncoderSpec,
    pub titletag: EncoderSpec,
    /// One encoder serves both branches; the specs must agree on shape.
    pub share_encoders: bool,
    /// Per direction.
    pub lstm_hidden: usize,
    pub attention_dim: usize,
    pub fusion_dim: usize,
    pub use_body: bool,
    pub use_titletag: bool,
    pub use_lstm: bool,
    pub pooling: Pooling,
    pub context: ContextConfig,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            body: EncoderSpec::default(),
            titletag: EncoderSpec { max_tokens: 512, ..EncoderSpec::default() },
            share_encoders: false,
            lstm_hidden: 128,
            attention_dim: 128,
            fusion_dim: 64,
            use_body: true,
            use_titletag: true,
            use_lstm: true,
            pooling: Pooling::Mean,
            context: ContextConfig::default(),
            dropout: 0.1,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Small configuration that trains in minutes on one CPU core.
    pub fn compact() -> Self {
        let enc = EncoderSpec { vocab_size: 8192, layers: 1, heads: 2, dim: 32, max_tokens: 32, trainable: true };
        Self {
            body: enc,
            titletag: EncoderSpec { max_tokens: 128, ..enc },
            lstm_hidden: 32,
            attention_dim: 32,
            fusion_dim: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_body && !self.use_titletag {
            return Err(Error::InvalidConfig("at least one of use_body and use_titletag must be set".into()));
        }
        if self.use_lstm && !self.use_body {
            return Err(Error::InvalidConfig("use_lstm requires use_body".into()));
        }
        self.body.validate("body")?;
        self.titletag.validate("title+tag")?;
        if self.share_encoders {
            let (b, t) = (&self.body, &self.titletag);
            if (b.vocab_size, b.layers, b.heads, b.dim, b.trainable) != (t.vocab_size, t.layers, t.heads, t.dim, t.trainable) {
                return Err(Error::InvalidConfig("shared encoders need identical shapes".into()));
            }
        }
        if self.lstm_hidden == 0 || self.attention_dim == 0 || self.fusion_dim == 0 {
            return Err(Error::InvalidConfig("hidden sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        self.context.validate()
    }
}

/// Token ids of one interaction for the body encoder, CLS first, truncated
/// to `max_tokens` by keeping the head.
pub fn interaction_tokens(
    tok: &HashingTokenizer,
    corpus: &Corpus,
    it: &Interaction,
    ctx: &ContextConfig,
    max_tokens: usize,
) -> Vec<u32> {
    let mut ids = alloc::vec![CLS];
    match it.kind {
        Kind::Post => {
            ids.extend(tok.encode(it.title.as_deref().unwrap_or("")));
            ids.push(SEP);
            ids.extend(tok.encode(&it.body));
        }
        Kind::Reply => match corpus.parent_of(it).filter(|_| ctx.replies_in_context) {
            Some(parent) => {
                ids.extend(tok.encode(parent.title.as_deref().unwrap_or("")));
                ids.push(SEP);
                ids.extend(tok.encode(&it.body));
                ids.push(SEP);
                ids.extend(tok.encode(&parent.body));
            }
            None => ids.extend(tok.encode(&it.body)),
        },
    }
    ids.truncate(max_tokens);
    ids
}

fn titletag_segment(corpus: &Corpus, it: &Interaction, include_prefix: bool) -> String {
    let (title, tags, prefix) = match it.kind {
        Kind::Post => (it.title.as_deref().unwrap_or(""), &it.tags[..], "User posted:"),
        Kind::Reply => match corpus.parent_of(it) {
            Some(p) => (p.title.as_deref().unwrap_or(""), &p.tags[..], "User replied to:"),
            None => ("", &[][..], "User replied to:"),
        },
    };
    let mut parts: Vec<String> = Vec::new();
    if include_prefix {
        parts.push(prefix.into());
    }
    if !title.is_empty() {
        parts.push(title.into());
    }
    if !tags.is_empty() {
        parts.push(alloc::format!("[tags: {}]", tags.join(", ")));
    }
    parts.join(" ")
}

/// Titles (a reply uses its parent's) and tags of the context as one
/// string, oldest first, interactions separated by `" | "`.
pub fn build_titletag_string(corpus: &Corpus, context: &[usize], include_prefix: bool) -> String {
    context
        .iter()
        .map(|&i| titletag_segment(corpus, corpus.get(i), include_prefix))
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Tokenised model inputs for one context. The title+tag string is kept
/// per interaction so sub-contexts can be re-assembled without re-reading
/// the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Prepared {
    pub bodies: Vec<Vec<u32>>,
    pub segments: Vec<Vec<u32>>,
    titletag_max: usize,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.bodies.len().max(self.segments.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CLS followed by the most recent tokens of the selected segments.
    pub fn titletag_ids(&self, mask: impl Fn(usize) -> bool) -> Vec<u32> {
        let all: Vec<u32> = self
            .segments
            .iter()
            .enumerate()
            .filter(|(i, _)| mask(*i))
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        let keep = self.titletag_max - 1;
        let mut ids = alloc::vec![CLS];
        ids.extend_from_slice(&all[all.len().saturating_sub(keep)..]);
        ids
    }
}

/// Tokenises `context` (chronological corpus indexes) for a model with
/// configuration `cfg`. Branches that are switched off get no inputs.
pub fn prepare_inputs(cfg: &ModelConfig, corpus: &Corpus, context: &[usize]) -> Result<Prepared> {
    let n = cfg.context.max_interactions;
    if context.len() > n {
        return Err(Error::ContextTooLong { len: context.len(), max: n });
    }
    let body_tok = HashingTokenizer::new(cfg.body.vocab_size);
    let tt_tok = HashingTokenizer::new(cfg.titletag.vocab_size);
    let bodies = if cfg.use_body {
        context
            .iter()
            .map(|&i| interaction_tokens(&body_tok, corpus, corpus.get(i), &cfg.context, cfg.body.max_tokens))
            .collect()
    } else {
        Vec::new()
    };
    let segments = if cfg.use_titletag {
        context
            .iter()
            .map(|&i| {
                let seg = titletag_segment(corpus, corpus.get(i), cfg.context.include_prefix);
                words(&seg).iter().map(|w| tt_tok.word_id(w)).collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Prepared { bodies, segments, titletag_max: cfg.titletag.max_tokens })
}

impl Architecture {
    fn body_encoder(&self) -> &TransformerEncoder {
        self.net.body.as_ref().expect("body encoder present")
    }

    fn titletag_encoder(&self) -> &TransformerEncoder {
        self.net.titletag.as_ref().or(self.net.body.as_ref()).expect("title+tag encoder present")
    }

    fn step_dim(&self) -> usize {
        match &self.net.lstm {
            Some(l) => l.output_dim(),
            None => self.cfg.body.dim,
        }
    }

    /// Fusion head over already encoded interactions (`vectors`, `[1 x d]`
    /// each) padded with zero rows to `slots`.
    fn head(&self, g: &mut Graph, vectors: &[Var], slots: usize, titletag: Option<&[u32]>) -> Var {
        let mut parts = Vec::with_capacity(2);
        if self.cfg.use_body {
            let pooled = if vectors.is_empty() {
                g.constant(Tensor::zeros(1, self.step_dim()))
            } else {
                let t = vectors.len();
                let steps = match &self.net.lstm {
                    Some(lstm) => {
                        let slots = slots.max(t);
                        let mut rows = vectors.to_vec();
                        let mut valid = alloc::vec![true; t];
                        for _ in t..slots {
                            rows.push(g.constant(Tensor::zeros(1, self.cfg.body.dim)));
                            valid.push(false);
                        }
                        let x = g.stack_rows(&rows);
                        let outs = lstm.run(g, x, &valid);
                        g.stack_rows(&outs)
                    }
                    None => g.stack_rows(vectors),
                };
                let attn = self.net.attention.as_ref().expect("attention present");
                attn.forward(g, steps, self.cfg.pooling == Pooling::Mean)
            };
            parts.push(pooled);
        }
        if self.cfg.use_titletag {
            let ids = titletag.expect("title+tag inputs prepared");
            let ids = if ids.is_empty() { &[CLS][..] } else { ids };
            parts.push(self.titletag_encoder().forward_cls(g, ids));
        }
        let h = if parts.len() == 1 { parts[0] } else { g.concat_cols(&parts) };
        let h = g.dropout(h);
        let h = self.net.hidden.forward(g, h);
        let h = g.tanh(h);
        self.net.out.forward(g, h)
    }

    /// Logits node for `p`, padded to `slots` interaction slots.
    pub(crate) fn logits(&self, g: &mut Graph, p: &Prepared, slots: usize) -> Var {
        let vectors: Vec<Var> = if self.cfg.use_body {
            p.bodies.iter().map(|ids| self.body_encoder().forward_cls(g, ids)).collect()
        } else {
            Vec::new()
        };
        let tt = self.cfg.use_titletag.then(|| p.titletag_ids(|_| true));
        self.head(g, &vectors, slots, tt.as_deref())
    }
}

/// Logits and class-1 probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Output {
    pub logits: [f64; 2],
    pub probability_sib: f64,
}

impl Output {
    fn from_logits(l: &[f64]) -> Self {
        let p = crate::nn::graph::softmax(l);
        Self { logits: [l[0], l[1]], probability_sib: p[1] }
    }

    /// Argmax decision; an exact tie goes to No-SIB.
    pub fn label(&self) -> Label {
        Label::from_bit(u8::from(self.logits[1] > self.logits[0]))
    }
}

#[derive(Debug, Clone)]
struct Net {
    body: Option<TransformerEncoder>,
    titletag: Option<TransformerEncoder>,
    lstm: Option<BiLstm>,
    attention: Option<AttentionPool>,
    hidden: Linear,
    out: Linear,
}

/// Configuration and layer handles; parameter values live in a separate
/// store so training can borrow both at once.
#[derive(Debug, Clone)]
pub(crate) struct Architecture {
    cfg: ModelConfig,
    net: Net,
}

#[derive(Debug, Clone)]
pub struct EarlySibModel {
    arch: Architecture,
    params: ParamStore,
}

impl EarlySibModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::seeded(cfg.seed);
        let mut store = ParamStore::new();
        let shared_len = cfg.body.max_tokens.max(cfg.titletag.max_tokens);
        let (body, titletag) = if cfg.share_encoders {
            (Some(cfg.body.build(&mut store, "encoder", shared_len, &mut rng)), None)
        } else {
            let b = cfg.use_body.then(|| cfg.body.build(&mut store, "body", cfg.body.max_tokens, &mut rng));
            let t = cfg
                .use_titletag
                .then(|| cfg.titletag.build(&mut store, "titletag", cfg.titletag.max_tokens, &mut rng));
            (b, t)
        };
        let d = cfg.body.dim;
        let (lstm, step_dim) = if cfg.use_lstm {
            let l = BiLstm::new(&mut store, "lstm", d, cfg.lstm_hidden, &mut rng);
            let out = l.output_dim();
            (Some(l), out)
        } else {
            (None, d)
        };
        let attention = cfg
            .use_body
            .then(|| AttentionPool::new(&mut store, "attention", step_dim, cfg.attention_dim, &mut rng));
        let mut fused = 0;
        if cfg.use_body {
            fused += step_dim;
        }
        if cfg.use_titletag {
            fused += cfg.titletag.dim;
        }
        let hidden = Linear::new(&mut store, "fusion.hidden", fused, cfg.fusion_dim, &mut rng);
        let out = Linear::new(&mut store, "fusion.out", cfg.fusion_dim, 2, &mut rng);
        Ok(Self { arch: Architecture { cfg, net: Net { body, titletag, lstm, attention, hidden, out } }, params: store })
    }

    pub(crate) fn split_mut(&mut self) -> (&Architecture, &mut ParamStore) {
        (&self.arch, &mut self.params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn prepare(&self, corpus: &Corpus, context: &[usize]) -> Result<Prepared> {
        prepare_inputs(&self.arch.cfg, corpus, context)
    }

    pub fn forward_padded(&self, p: &Prepared, slots: usize) -> Output {
        let mut g = Graph::new(&self.params);
        let l = self.arch.logits(&mut g, p, slots);
        Output::from_logits(&g.value(l).data)
    }

    pub fn forward_prepared(&self, p: &Prepared) -> Output {
        self.forward_padded(p, self.arch.cfg.context.max_interactions)
    }

    pub fn forward(&self, corpus: &Corpus, context: &[usize]) -> Result<Output> {
        Ok(self.forward_prepared(&self.prepare(corpus, context)?))
    }

    /// Body-encoder output per interaction (empty when the body branch is off).
    pub fn encode_bodies(&self, p: &Prepared) -> Vec<Tensor> {
        if !self.arch.cfg.use_body {
            return Vec::new();
        }
        p.bodies
            .iter()
            .map(|ids| {
                let mut g = Graph::new(&self.params);
                let v = self.arch.body_encoder().forward_cls(&mut g, ids);
                g.value(v).clone()
            })
            .collect()
    }

    /// CLS vector of one interaction.
    pub fn encode_interaction(&self, corpus: &Corpus, it: &Interaction) -> Tensor {
        let tok = HashingTokenizer::new(self.arch.cfg.body.vocab_size);
        let ids = interaction_tokens(&tok, corpus, it, &self.arch.cfg.context, self.arch.cfg.body.max_tokens);
        let mut g = Graph::new(&self.params);
        let enc = self.arch.net.body.as_ref().or(self.arch.net.titletag.as_ref()).expect("an encoder");
        let v = enc.forward_cls(&mut g, &ids);
        g.value(v).clone()
    }

    /// Output on the sub-context selected by `mask`, reusing body encodings
    /// from [`Self::encode_bodies`].
    pub fn forward_subset(&self, p: &Prepared, encodings: &[Tensor], mask: impl Fn(usize) -> bool) -> Output {
        let mut g = Graph::new(&self.params);
        let vectors: Vec<Var> = encodings
            .iter()
            .enumerate()
            .filter(|(i, _)| mask(*i))
            .map(|(_, t)| g.constant(t.clone()))
            .collect();
        let tt = self.arch.cfg.use_titletag.then(|| p.titletag_ids(&mask));
        let l = self.arch.head(&mut g, &vectors, vectors.len(), tt.as_deref());
        Output::from_logits(&g.value(l).data)
    }

    /// Cross-entropy loss and its parameter gradients, without dropout.
    pub fn loss_and_gradients(&self, p: &Prepared, label: Label) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(&self.params);
        let mut g = Graph::new(&self.params);
        let l = self.arch.logits(&mut g, p, p.len().max(1));
        let loss = g.cross_entropy(l, label.bit() as usize);
        g.backward(loss, &mut grads);
        (g.value(loss).data[0], grads)
    }

    /// Loss only, without dropout.
    pub fn loss(&self, p: &Prepared, label: Label) -> f64 {
        let mut g = Graph::new(&self.params);
        let l = self.arch.logits(&mut g, p, p.len().max(1));
        let loss = g.cross_entropy(l, label.bit() as usize);
        g.value(loss).data[0]
    }
}
