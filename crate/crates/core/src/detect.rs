//! Post-level SIB detector: a token encoder with a two-class head over the
//! title and body of a post.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, Interaction, Label, PostLabel};
use crate::earlysib::EncoderSpec;
use crate::error::{Error, Result};
use crate::metrics::{Confusion, MeanSd};
use crate::nn::{AdamW, AdamWConfig, Graph, Linear, ParamStore, TransformerEncoder, Var};
use crate::rng;
use crate::text::{HashingTokenizer, CLS};
use crate::trainer::{stratified_kfold, train_epoch, StepSettings};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DetectorConfig {
    /// `max_tokens` bounds the post length (CLS included).
    pub encoder: EncoderSpec,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderSpec { vocab_size: 8192, layers: 1, heads: 2, dim: 32, max_tokens: 48, trainable: true },
            lr: 1e-3,
            weight_decay: 0.01,
            batch_size: 8,
            epochs: 6,
            dropout: 0.1,
            seed: 42,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate("detector")?;
        if self.encoder.max_tokens < 8 {
            return Err(Error::InvalidConfig("detector max_tokens must be at least 8".into()));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("detector hyperparameters must be positive".into()));
        }
        Ok(())
    }
}

/// Text seen by the detector: title and body separated by a space.
pub fn detector_text(post: &Interaction) -> String {
    match &post.title {
        Some(t) => alloc::format!("{t} {}", post.body),
        None => post.body.clone(),
    }
}

#[derive(Debug, Clone)]
struct DetectorNet {
    encoder: TransformerEncoder,
    head: Linear,
}

impl DetectorNet {
    fn logits(&self, g: &mut Graph, ids: &[u32]) -> Var {
        let cls = self.encoder.forward_cls(g, ids);
        let cls = g.dropout(cls);
        self.head.forward(g, cls)
    }
}

#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    net: DetectorNet,
    params: ParamStore,
    /// Held-out fold, if trained inside cross-validation.
    pub fold: Option<usize>,
}

impl Detector {
    pub fn new(cfg: DetectorConfig, fold: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::seeded(cfg.seed);
        let mut params = ParamStore::new();
        let e = &cfg.encoder;
        let encoder = TransformerEncoder::new(
            &mut params,
            "encoder",
            e.vocab_size as usize,
            e.dim,
            e.heads,
            e.layers,
            e.max_tokens,
            &mut rng,
        );
        if !e.trainable {
            params.set_trainable("encoder", false);
        }
        let head = Linear::new(&mut params, "head", e.dim, 2, &mut rng);
        Ok(Self { cfg, net: DetectorNet { encoder, head }, params, fold })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn tokens(&self, post: &Interaction) -> Vec<u32> {
        let tok = HashingTokenizer::new(self.cfg.encoder.vocab_size);
        let mut ids = alloc::vec![CLS];
        ids.extend(tok.encode(&detector_text(post)));
        ids.truncate(self.cfg.encoder.max_tokens);
        ids
    }

    /// `[P(No-SIB), P(SIB)]`.
    pub fn probabilities(&self, post: &Interaction) -> [f64; 2] {
        let mut g = Graph::new(&self.params);
        let l = self.net.logits(&mut g, &self.tokens(post));
        let p = crate::nn::graph::softmax(&g.value(l).data);
        [p[0], p[1]]
    }

    /// Argmax label; an exact tie goes to No-SIB.
    pub fn predict(&self, post: &Interaction) -> Label {
        let p = self.probabilities(post);
        Label::from_bit(u8::from(p[1] > p[0]))
    }

    fn fit(&mut self, ids: &[Vec<u32>], labels: &[Label], train: &[usize]) -> Result<()> {
        let mut opt = AdamW::new(
            &self.params,
            AdamWConfig { lr: self.cfg.lr, weight_decay: self.cfg.weight_decay, ..AdamWConfig::default() },
        );
        let settings = StepSettings {
            batch_size: self.cfg.batch_size,
            grad_accum: 1,
            clip_norm: 1.0,
            dropout: self.cfg.dropout,
            seed: rng::mix(self.cfg.seed, 0xDE7),
        };
        for epoch in 1..=self.cfg.epochs {
            let mut order = train.to_vec();
            rng::shuffle(&mut rng::substream(self.cfg.seed, epoch as u64), &mut order);
            let net = &self.net;
            train_epoch(&mut self.params, &mut opt, &order, epoch, settings, |g, i| {
                let l = net.logits(g, &ids[i]);
                g.cross_entropy(l, labels[i].bit() as usize)
            })?;
        }
        self.params.round_to_f32();
        Ok(())
    }
}

/// Detection quality on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionMetrics {
    pub confusion: Confusion,
    pub weighted_f1: f64,
    pub recall: f64,
    pub precision: Option<f64>,
    pub row_normalized: [[f64; 2]; 2],
}

impl From<Confusion> for DetectionMetrics {
    fn from(c: Confusion) -> Self {
        Self {
            confusion: c,
            weighted_f1: c.weighted_f1(),
            recall: c.recall(),
            precision: c.precision(),
            row_normalized: c.row_normalized(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectorFold {
    pub fold: usize,
    pub detector: Detector,
    pub metrics: DetectionMetrics,
    /// Positions in the training input held out for this fold.
    pub test: Vec<usize>,
}

/// Fold detectors plus mean and population SD of their metrics.
#[derive(Debug, Clone)]
pub struct DetectorCv {
    pub folds: Vec<DetectorFold>,
    pub weighted_f1: MeanSd,
    pub recall: MeanSd,
    pub precision: Option<MeanSd>,
}

impl DetectorCv {
    /// Detector whose test fold holds position `i`.
    pub fn holding_out(&self, i: usize) -> Option<&Detector> {
        self.folds.iter().find(|f| f.test.binary_search(&i).is_ok()).map(|f| &f.detector)
    }
}

fn check_inputs(posts: &[&Interaction], labels: &[PostLabel]) -> Result<()> {
    if posts.is_empty() {
        return Err(Error::EmptyInput("labeled posts"));
    }
    if posts.len() != labels.len() {
        return Err(Error::LengthMismatch { left: posts.len(), right: labels.len() });
    }
    Ok(())
}

/// Stratified k-fold training and evaluation. Every fold holds both classes.
pub fn train_detector(posts: &[&Interaction], labels: &[PostLabel], cfg: &DetectorConfig, k: usize) -> Result<DetectorCv> {
    check_inputs(posts, labels)?;
    let y: Vec<Label> = labels.iter().map(|l| l.label).collect();
    let folds = stratified_kfold(&y, k, cfg.seed)?;
    let probe = Detector::new(cfg.clone(), None)?;
    let ids: Vec<Vec<u32>> = posts.iter().map(|p| probe.tokens(p)).collect();
    let mut out = Vec::with_capacity(k);
    for (f, test) in folds.into_iter().enumerate() {
        let mut in_test = alloc::vec![false; posts.len()];
        test.iter().for_each(|&i| in_test[i] = true);
        let train: Vec<usize> = (0..posts.len()).filter(|&i| !in_test[i]).collect();
        let fold_cfg = DetectorConfig { seed: rng::mix(cfg.seed, f as u64), ..cfg.clone() };
        let mut det = Detector::new(fold_cfg, Some(f))?;
        det.fit(&ids, &y, &train)?;
        let mut c = Confusion::default();
        for &i in &test {
            c.record(det.predict(posts[i]) == Label::Sib, y[i] == Label::Sib);
        }
        out.push(DetectorFold { fold: f, detector: det, metrics: c.into(), test });
    }
    let each = |m: fn(&DetectionMetrics) -> f64| MeanSd::of(&out.iter().map(|f| m(&f.metrics)).collect::<Vec<_>>());
    Ok(DetectorCv {
        weighted_f1: each(|m| m.weighted_f1),
        recall: each(|m| m.recall),
        precision: MeanSd::of_defined(&out.iter().map(|f| f.metrics.precision).collect::<Vec<_>>()),
        folds: out,
    })
}

/// One detector trained on every labeled post; used to label a corpus.
pub fn train_detector_full(posts: &[&Interaction], labels: &[PostLabel], cfg: &DetectorConfig) -> Result<Detector> {
    check_inputs(posts, labels)?;
    let y: Vec<Label> = labels.iter().map(|l| l.label).collect();
    let mut det = Detector::new(cfg.clone(), None)?;
    let ids: Vec<Vec<u32>> = posts.iter().map(|p| det.tokens(p)).collect();
    let all: Vec<usize> = (0..posts.len()).collect();
    det.fit(&ids, &y, &all)?;
    Ok(det)
}

/// Metrics on the hard instances only, each scored by the detector of the
/// fold that held it out.
pub fn evaluate_hard_subset(cv: &DetectorCv, posts: &[&Interaction], labels: &[PostLabel]) -> Result<DetectionMetrics> {
    check_inputs(posts, labels)?;
    let mut c = Confusion::default();
    let mut any = false;
    for (i, l) in labels.iter().enumerate() {
        if !l.hard {
            continue;
        }
        any = true;
        let det = cv.holding_out(i).ok_or(Error::EmptyInput("fold holding out a hard post"))?;
        c.record(det.predict(posts[i]) == Label::Sib, l.label == Label::Sib);
    }
    if !any {
        return Err(Error::EmptyInput("hard posts"));
    }
    Ok(c.into())
}

/// One label per post of `corpus`, chronological. Replies are not labeled.
pub fn label_corpus(detector: &Detector, corpus: &Corpus) -> Vec<PostLabel> {
    corpus
        .posts()
        .map(|p| PostLabel { post_id: p.id.clone(), label: detector.predict(p), hard: false })
        .collect()
}
