//! Interaction-level Shapley attribution of Early-SIB predictions, and the
//! complexity and lead-time statistics derived from it.
//!
//! The game: players are the interactions of a user's context, and the value
//! of a coalition is the class-1 probability on the sub-context that keeps
//! only those interactions (removed interactions also leave the title+tag
//! string).

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, Label, Timestamp};
use crate::earlysib::{EarlySibModel, Prepared};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng;
use crate::userset::UserRecord;

/// Largest context explained by full enumeration.
pub const MAX_EXACT: usize = 12;

/// A cooperative game over `players()` players.
pub trait Game {
    fn players(&self) -> usize;
    fn value(&self, mask: &[bool]) -> f64;
}

/// The model's coalition game for one context. Body encodings are computed
/// once and reused across coalitions.
pub struct ModelGame<'a> {
    model: &'a EarlySibModel,
    prepared: Prepared,
    encodings: Vec<Tensor>,
}

impl<'a> ModelGame<'a> {
    pub fn new(model: &'a EarlySibModel, corpus: &Corpus, context: &[usize]) -> Result<Self> {
        let prepared = model.prepare(corpus, context)?;
        let encodings = model.encode_bodies(&prepared);
        Ok(Self { model, prepared, encodings })
    }
}

impl Game for ModelGame<'_> {
    fn players(&self) -> usize {
        self.prepared.len()
    }

    fn value(&self, mask: &[bool]) -> f64 {
        self.model.forward_subset(&self.prepared, &self.encodings, |i| mask[i]).probability_sib
    }
}

/// Class-1 probability on the masked-in part of `context`.
pub fn coalition_value(model: &EarlySibModel, corpus: &Corpus, context: &[usize], mask: &[bool]) -> Result<f64> {
    if mask.len() != context.len() {
        return Err(Error::LengthMismatch { left: mask.len(), right: context.len() });
    }
    Ok(ModelGame::new(model, corpus, context)?.value(mask))
}

fn mask_of(bits: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| bits >> i & 1 == 1).collect()
}

/// Exact Shapley values by enumerating all coalitions once.
pub fn exact_values<G: Game + ?Sized>(game: &G) -> Result<Vec<f64>> {
    let n = game.players();
    if n > MAX_EXACT {
        return Err(Error::ContextTooLargeForExact { len: n, max: MAX_EXACT });
    }
    let v: Vec<f64> = (0..1u32 << n).map(|s| game.value(&mask_of(s, n))).collect();
    // weight[k] = k!(n-k-1)!/n!
    let mut weight = alloc::vec![0.0; n.max(1)];
    for (k, w) in weight.iter_mut().enumerate().take(n) {
        let mut x = 1.0 / n as f64;
        for j in 1..=k {
            x *= j as f64 / (n - j) as f64;
        }
        *w = x;
    }
    let mut phi = alloc::vec![0.0; n];
    for s in 0..1u32 << n {
        let k = s.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += weight[k] * (v[(s | 1 << i) as usize] - v[s as usize]);
            }
        }
    }
    Ok(phi)
}

/// Antithetic permutation sampling: `m` permutations in pairs (a random
/// order and its reverse), then shifted so the values sum to
/// `v(full) - v(empty)`.
pub fn sampled_values<G: Game + ?Sized>(game: &G, m: usize, seed: u64) -> Result<Vec<f64>> {
    if m < 100 {
        return Err(Error::InvalidConfig(alloc::format!("sampling needs at least 100 permutations, got {m}")));
    }
    let n = game.players();
    if n == 0 {
        return Ok(Vec::new());
    }
    let empty = game.value(&alloc::vec![false; n]);
    let full = game.value(&alloc::vec![true; n]);
    let mut rng = rng::seeded(seed);
    let mut phi = alloc::vec![0.0; n];
    let pairs = m.div_ceil(2);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..pairs {
        rng::shuffle(&mut rng, &mut order);
        for reversed in [false, true] {
            let mut mask = alloc::vec![false; n];
            let mut prev = empty;
            for step in 0..n {
                let i = if reversed { order[n - 1 - step] } else { order[step] };
                mask[i] = true;
                // The last marginal lands on the full coalition.
                let cur = if step + 1 == n { full } else { game.value(&mask) };
                phi[i] += cur - prev;
                prev = cur;
            }
        }
    }
    let draws = (2 * pairs) as f64;
    phi.iter_mut().for_each(|p| *p /= draws);
    let gap = (full - empty - phi.iter().sum::<f64>()) / n as f64;
    phi.iter_mut().for_each(|p| *p += gap);
    Ok(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Method {
    Exact,
    Sampled { m: usize, seed: u64 },
}

/// Attribution of one prediction over the interactions of its context.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Explanation {
    pub user: String,
    /// Interaction ids, chronological.
    pub interactions: Vec<String>,
    /// Unix seconds, parallel to `interactions`.
    pub timestamps: Vec<i64>,
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub fx: f64,
    pub method: Method,
}

impl Explanation {
    /// `Σphi - (fx - base_value)`.
    pub fn efficiency_gap(&self) -> f64 {
        self.phi.iter().sum::<f64>() - (self.fx - self.base_value)
    }
}

fn explanation(game: &ModelGame<'_>, corpus: &Corpus, user: &str, context: &[usize], phi: Vec<f64>, method: Method) -> Explanation {
    let n = context.len();
    Explanation {
        user: user.into(),
        interactions: context.iter().map(|&i| corpus.get(i).id.clone()).collect(),
        timestamps: context.iter().map(|&i| corpus.get(i).timestamp.seconds()).collect(),
        phi,
        base_value: game.value(&alloc::vec![false; n]),
        fx: game.value(&alloc::vec![true; n]),
        method,
    }
}

pub fn shapley_exact(model: &EarlySibModel, corpus: &Corpus, user: &str, context: &[usize]) -> Result<Explanation> {
    if context.len() > MAX_EXACT {
        return Err(Error::ContextTooLargeForExact { len: context.len(), max: MAX_EXACT });
    }
    let game = ModelGame::new(model, corpus, context)?;
    let phi = exact_values(&game)?;
    Ok(explanation(&game, corpus, user, context, phi, Method::Exact))
}

pub fn shapley_sampled(
    model: &EarlySibModel,
    corpus: &Corpus,
    user: &str,
    context: &[usize],
    m: usize,
    seed: u64,
) -> Result<Explanation> {
    let game = ModelGame::new(model, corpus, context)?;
    let phi = sampled_values(&game, m, seed)?;
    Ok(explanation(&game, corpus, user, context, phi, Method::Sampled { m, seed }))
}

/// Exact up to [`MAX_EXACT`] interactions, sampled beyond.
pub fn shapley(model: &EarlySibModel, corpus: &Corpus, user: &str, context: &[usize], m: usize, seed: u64) -> Result<Explanation> {
    if context.len() <= MAX_EXACT {
        shapley_exact(model, corpus, user, context)
    } else {
        shapley_sampled(model, corpus, user, context, m, seed)
    }
}

/// Normalized Shannon entropy of `|phi|`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplexityScore {
    pub entropy: f64,
    /// False for fewer than two interactions or all-zero attributions.
    pub defined: bool,
}

pub fn complexity_of(phi: &[f64]) -> ComplexityScore {
    let total: f64 = phi.iter().map(|p| p.abs()).sum();
    if phi.len() <= 1 || total <= 0.0 || !total.is_finite() {
        return ComplexityScore { entropy: 0.0, defined: false };
    }
    let h: f64 = phi
        .iter()
        .map(|p| p.abs() / total)
        .filter(|&q| q > 0.0)
        .map(|q| -q * libm::log(q))
        .sum();
    let entropy = (h / libm::log(phi.len() as f64)).clamp(0.0, 1.0);
    ComplexityScore { entropy, defined: true }
}

pub fn complexity(expl: &Explanation) -> ComplexityScore {
    complexity_of(&expl.phi)
}

/// The interaction pushing hardest toward SIB, and how long before the
/// first SIB post it was written.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LeadTimeStat {
    pub most_predictive: String,
    pub days_before_sib: u64,
}

/// How the most predictive interaction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LeadRule {
    /// Largest attribution toward SIB.
    #[default]
    Signed,
    /// Largest attribution in magnitude.
    Absolute,
}

/// Largest signed phi wins; ties go to the most recent interaction.
pub fn lead_time(expl: &Explanation, record: &UserRecord) -> Result<LeadTimeStat> {
    lead_time_with(expl, record, LeadRule::Signed)
}

pub fn lead_time_with(expl: &Explanation, record: &UserRecord, rule: LeadRule) -> Result<LeadTimeStat> {
    let sib_time = match (record.label, record.first_sib_time) {
        (Label::Sib, Some(t)) => t,
        _ => return Err(Error::NotSibUser(record.user.clone())),
    };
    let score = |i: usize| match rule {
        LeadRule::Signed => expl.phi[i],
        LeadRule::Absolute => expl.phi[i].abs(),
    };
    let mut best: Option<usize> = None;
    for i in 0..expl.phi.len() {
        let newer = |b: usize| expl.timestamps[i] >= expl.timestamps[b];
        match best {
            Some(b) if score(i) < score(b) || (score(i) == score(b) && !newer(b)) => {}
            _ => best = Some(i),
        }
    }
    let i = best.ok_or_else(|| Error::EmptyHistory(record.user.clone()))?;
    let delta = sib_time.seconds() - expl.timestamps[i];
    Ok(LeadTimeStat {
        most_predictive: expl.interactions[i].clone(),
        days_before_sib: delta.max(0).div_euclid(Timestamp::SECONDS_PER_DAY) as u64,
    })
}

/// Fixed-width histogram starting at zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `[lo, hi)` of bin `i`.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.bin_width, (i + 1) as f64 * self.bin_width)
    }
}

/// Lead times in 10-day bins; the last bin holds the maximum.
pub fn lead_time_histogram(days: &[u64]) -> Histogram {
    const WIDTH: u64 = 10;
    let bins = days.iter().max().map_or(0, |m| (m / WIDTH + 1) as usize);
    let mut counts = alloc::vec![0; bins];
    days.iter().for_each(|d| counts[(d / WIDTH) as usize] += 1);
    Histogram { bin_width: WIDTH as f64, counts }
}

/// Complexities in ten bins of width 0.1 over `[0, 1]`; 1.0 joins the last.
pub fn complexity_histogram(scores: &[ComplexityScore]) -> Histogram {
    let mut counts = alloc::vec![0; 10];
    for s in scores.iter().filter(|s| s.defined) {
        counts[((s.entropy * 10.0) as usize).min(9)] += 1;
    }
    Histogram { bin_width: 0.1, counts }
}
