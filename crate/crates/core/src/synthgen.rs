//! Seeded synthetic forum with a planted risk signal.
//!
//! Every user draws a history length from a discretised log-normal and a
//! class from the prevalence. Pre-SIB interactions of SIB users use
//! distress vocabulary at an elevated rate; SIB users end with a single
//! post containing explicit vocabulary and a SIB tag. A small rate of
//! class-independent "hard" posts carries a SIB tag and distress language
//! without explicit vocabulary.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Corpus, Interaction, Kind, Label, PostLabel, Timestamp, DEFAULT_SIB_TAGS};
use crate::error::{Error, Result};
use crate::rng::{self, StdRng};

/// 2020-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_577_836_800;

const NEUTRAL_WORDS: [&str; 50] = [
    "school", "huiswerk", "vrienden", "weekend", "muziek", "film", "werk", "eten", "sport",
    "familie", "vakantie", "boek", "spel", "kat", "hond", "fiets", "stad", "trein", "zomer",
    "winter", "feest", "les", "toets", "klas", "docent", "ouders", "broer", "zus", "oma", "opa",
    "voetbal", "gitaar", "tekenen", "koken", "strand", "bos", "verjaardag", "cadeau", "kamer",
    "tuin", "markt", "bakker", "regen", "zon", "computer", "telefoon", "serie", "concert",
    "dansen", "zwemmen",
];

const DISTRESS_WORDS: [&str; 30] = [
    "verdriet", "eenzaam", "somber", "huilen", "angst", "paniek", "moe", "leeg", "waardeloos",
    "hopeloos", "pijn", "slapeloos", "zorgen", "bang", "alleen", "verloren", "donker", "schuld",
    "schaamte", "onrust", "wanhoop", "piekeren", "gepest", "ruzie", "boos", "zwaar", "kapot",
    "uitgeput", "verdrietig", "onzeker",
];

const EXPLICIT_WORDS: [&str; 8] = [
    "dood", "doden", "doodgaan", "levensmoe", "afscheidsbrief", "overdosis", "sterven",
    "einde",
];

const NEUTRAL_TAGS: [&str; 8] =
    ["vriendschap", "liefde", "hobby", "gezondheid", "relaties", "toekomst", "studie", "uitgaan"];

const DISTRESS_TAGS: [&str; 8] = [
    "depressie", "eenzaamheid", "angsten", "rouw", "pesten", "zelfbeeld", "somberheid",
    "verslaving",
];

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

/// Word and tag pools. All pools are pairwise disjoint.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vocabulary {
    pub neutral: Vec<String>,
    pub distress: Vec<String>,
    pub explicit: Vec<String>,
    pub neutral_tags: Vec<String>,
    pub distress_tags: Vec<String>,
    pub sib_tags: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            neutral: owned(&NEUTRAL_WORDS),
            distress: owned(&DISTRESS_WORDS),
            explicit: owned(&EXPLICIT_WORDS),
            neutral_tags: owned(&NEUTRAL_TAGS),
            distress_tags: owned(&DISTRESS_TAGS),
            sib_tags: owned(&DEFAULT_SIB_TAGS),
        }
    }
}

impl Vocabulary {
    fn pools(&self) -> [(&'static str, &[String]); 6] {
        [
            ("neutral", &self.neutral),
            ("distress", &self.distress),
            ("explicit", &self.explicit),
            ("neutral_tags", &self.neutral_tags),
            ("distress_tags", &self.distress_tags),
            ("sib_tags", &self.sib_tags),
        ]
    }

    fn validate(&self) -> Result<()> {
        let pools = self.pools();
        for (name, pool) in pools {
            if pool.is_empty() {
                return Err(Error::InvalidConfig(format!("vocabulary pool {name} is empty")));
            }
        }
        for (i, (a, pa)) in pools.iter().enumerate() {
            for (b, pb) in &pools[i + 1..] {
                if let Some(w) = pa.iter().find(|w| pb.contains(w)) {
                    return Err(Error::InvalidConfig(format!(
                        "vocabulary pools {a} and {b} share {w:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Where the class contrast is planted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SignalLocation {
    /// Distress words in titles and bodies.
    #[default]
    Body,
    /// Distress tags on posts; text is class-independent.
    Tags,
}

/// Target quantiles of the pre-SIB history length. The log-normal is fitted
/// to the median and upper quartile; the lower quartile follows by symmetry
/// on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryLengths {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: usize,
}

impl Default for HistoryLengths {
    fn default() -> Self {
        Self { p25: 1.0, p50: 3.0, p75: 8.0, max: 200 }
    }
}

/// Upper-quartile z score of the standard normal.
const Z75: f64 = 0.674_489_750_196_081_7;

impl HistoryLengths {
    /// `(mu, sigma)` of the underlying normal on the log scale.
    pub fn log_normal(&self) -> (f64, f64) {
        let mu = libm::log(self.p50);
        (mu, (libm::log(self.p75) - mu) / Z75)
    }

    fn sample(&self, rng: &mut StdRng) -> usize {
        let (mu, sigma) = self.log_normal();
        let x = libm::exp(mu + sigma * rng::normal(rng));
        (libm::round(x) as usize).clamp(1, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GenConfig {
    pub n_users: usize,
    pub sib_prevalence: f64,
    pub history: HistoryLengths,
    /// Distress rate multiplier for SIB users: `p1 = min(p0 * (1 + s), 0.95)`.
    pub signal_strength: f64,
    pub signal_location: SignalLocation,
    /// `p0`: distress word (or tag) rate of unaffected interactions.
    pub base_distress_rate: f64,
    /// Per-post probability of a hard (No-SIB, distress-heavy, SIB-tagged) post.
    pub hard_post_rate: f64,
    /// Distress word rate inside hard posts.
    pub hard_distress_rate: f64,
    pub reply_fraction: f64,
    pub window_days: u32,
    /// Start of the activity window, seconds since the epoch.
    pub start: i64,
    pub vocab: Vocabulary,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            sib_prevalence: 0.04,
            history: HistoryLengths::default(),
            signal_strength: 9.0,
            signal_location: SignalLocation::Body,
            base_distress_rate: 0.05,
            hard_post_rate: 0.01,
            hard_distress_rate: 0.4,
            reply_fraction: 0.3,
            window_days: 500,
            start: DEFAULT_START,
            vocab: Vocabulary::default(),
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if !(self.sib_prevalence > 0.0 && self.sib_prevalence < 1.0) {
            return bad("sib_prevalence must lie in (0, 1)");
        }
        if !(self.signal_strength >= 0.0) || !self.signal_strength.is_finite() {
            return bad("signal_strength must be finite and non-negative");
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.base_distress_rate > 0.0 && self.base_distress_rate < 1.0) {
            return bad("base_distress_rate must lie in (0, 1)");
        }
        if !unit(self.hard_post_rate) || !unit(self.hard_distress_rate) || !unit(self.reply_fraction)
        {
            return bad("rates must lie in [0, 1]");
        }
        let h = &self.history;
        if !(h.p50 >= 1.0 && h.p75 >= h.p50 && h.max >= 1) {
            return bad("history quantiles must satisfy 1 <= p50 <= p75 and max >= 1");
        }
        if self.window_days == 0 {
            return bad("window_days must be positive");
        }
        self.vocab.validate()
    }

    /// Distress rate of pre-SIB interactions of a user of class `sib`.
    pub fn distress_rate(&self, sib: bool) -> f64 {
        if sib {
            (self.base_distress_rate * (1.0 + self.signal_strength)).min(0.95)
        } else {
            self.base_distress_rate
        }
    }
}

/// Planted truth of a generated corpus.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub users: Vec<UserTruth>,
    pub sib_posts: BTreeSet<String>,
    pub hard_posts: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserTruth {
    pub user: String,
    pub label: Label,
    /// Position of the SIB post in the user's chronological interactions.
    pub first_sib_index: Option<usize>,
    pub first_sib_post: Option<String>,
    pub first_sib_time: Option<i64>,
}

impl GroundTruth {
    pub fn is_sib_post(&self, id: &str) -> bool {
        self.sib_posts.contains(id)
    }

    pub fn user(&self, user: &str) -> Option<&UserTruth> {
        self.users.iter().find(|u| u.user == user)
    }

    pub fn sib_user_count(&self) -> usize {
        self.users.iter().filter(|u| u.label == Label::Sib).count()
    }
}

/// Token reference: `(pool, index)`.
type Tok = (u8, u16);

const P_NEUTRAL: u8 = 0;
const P_DISTRESS: u8 = 1;
const P_EXPLICIT: u8 = 2;
const P_NEUTRAL_TAG: u8 = 3;
const P_DISTRESS_TAG: u8 = 4;
const P_SIB_TAG: u8 = 5;

#[derive(Debug, Clone)]
struct Sketch {
    kind: Kind,
    offset: i64,
    title: Vec<Tok>,
    body: Vec<Tok>,
    tags: Vec<Tok>,
    hard: bool,
    sib: bool,
    draws: u32,
    hits: u32,
}

fn draw_words(rng: &mut StdRng, v: &Vocabulary, n: usize, rate: f64, hits: &mut u32) -> Vec<Tok> {
    (0..n)
        .map(|_| {
            if rng::bernoulli(rng, rate) {
                *hits += 1;
                (P_DISTRESS, rng::index(rng, v.distress.len()) as u16)
            } else {
                (P_NEUTRAL, rng::index(rng, v.neutral.len()) as u16)
            }
        })
        .collect()
}

fn range(rng: &mut StdRng, lo: usize, hi: usize) -> usize {
    lo + rng::index(rng, hi - lo + 1)
}

/// Drafts one user's interactions in chronological order. The terminal SIB
/// post (if any) is last and strictly later than every other interaction.
fn sketch_user(cfg: &GenConfig, rng: &mut StdRng, sib: bool) -> Vec<Sketch> {
    let v = &cfg.vocab;
    let len = cfg.history.sample(rng);
    let window = cfg.window_days as usize * Timestamp::SECONDS_PER_DAY as usize;
    let total = len + usize::from(sib);
    let mut times: Vec<i64> = (0..total).map(|_| rng::index(rng, window) as i64).collect();
    times.sort_unstable();
    if sib && total > 1 && times[total - 1] <= times[total - 2] {
        times[total - 1] = times[total - 2] + 1;
    }
    let p = cfg.distress_rate(sib);
    let (text_rate, tag_rate) = match cfg.signal_location {
        SignalLocation::Body => (p, cfg.base_distress_rate),
        SignalLocation::Tags => (cfg.base_distress_rate, p),
    };
    let mut out = Vec::with_capacity(total);
    for (k, &offset) in times.iter().enumerate() {
        let terminal = sib && k == total - 1;
        let kind = if !terminal && rng::bernoulli(rng, cfg.reply_fraction) { Kind::Reply } else { Kind::Post };
        let hard = !terminal && kind == Kind::Post && rng::bernoulli(rng, cfg.hard_post_rate);
        let n_title = range(rng, 2, 4);
        let n_body = range(rng, 8, 24);
        let (mut text_hits, mut tag_hits) = (0, 0);
        let (title, mut body, tags);
        if hard {
            title = draw_words(rng, v, n_title, cfg.hard_distress_rate, &mut text_hits);
            body = draw_words(rng, v, n_body, cfg.hard_distress_rate, &mut text_hits);
            tags = alloc::vec![(P_SIB_TAG, rng::index(rng, v.sib_tags.len()) as u16)];
        } else {
            title = draw_words(rng, v, n_title, text_rate, &mut text_hits);
            body = draw_words(rng, v, n_body, text_rate, &mut text_hits);
            let n_tags = range(rng, 0, 2);
            let mut t: Vec<Tok> = (0..n_tags)
                .map(|_| {
                    if rng::bernoulli(rng, tag_rate) {
                        tag_hits += 1;
                        (P_DISTRESS_TAG, rng::index(rng, v.distress_tags.len()) as u16)
                    } else {
                        (P_NEUTRAL_TAG, rng::index(rng, v.neutral_tags.len()) as u16)
                    }
                })
                .collect();
            if terminal {
                t.push((P_SIB_TAG, rng::index(rng, v.sib_tags.len()) as u16));
            }
            tags = t;
        }
        if terminal {
            for _ in 0..range(rng, 2, 3) {
                let pos = rng::index(rng, body.len() + 1);
                body.insert(pos, (P_EXPLICIT, rng::index(rng, v.explicit.len()) as u16));
            }
        }
        let (draws, hits) = match cfg.signal_location {
            // Replies drop their drafted title.
            SignalLocation::Body if kind == Kind::Reply => {
                (n_body as u32, body.iter().filter(|t| t.0 == P_DISTRESS).count() as u32)
            }
            SignalLocation::Body => ((n_title + n_body) as u32, text_hits),
            SignalLocation::Tags => {
                if kind == Kind::Post {
                    (tags.len() as u32, tag_hits)
                } else {
                    (0, 0)
                }
            }
        };
        out.push(Sketch { kind, offset, title, body, tags, hard, sib: terminal, draws, hits });
    }
    out
}

fn render(v: &Vocabulary, toks: &[Tok]) -> Vec<String> {
    toks.iter()
        .map(|&(pool, i)| {
            let pool: &[String] = match pool {
                P_NEUTRAL => &v.neutral,
                P_DISTRESS => &v.distress,
                P_EXPLICIT => &v.explicit,
                P_NEUTRAL_TAG => &v.neutral_tags,
                P_DISTRESS_TAG => &v.distress_tags,
                _ => &v.sib_tags,
            };
            pool[i as usize].clone()
        })
        .collect()
}

fn user_name(index: usize) -> String {
    format!("u{index:05}")
}

/// Stream reserved for resolving reply parents.
const PARENT_STREAM: u64 = u64::MAX;
/// Stream base for the oracle's simulated users.
const ORACLE_STREAM: u64 = 1 << 62;

/// Generates a corpus, its planted truth, and a label for every post.
pub fn generate_corpus(cfg: &GenConfig) -> Result<(Corpus, GroundTruth, Vec<PostLabel>)> {
    cfg.validate()?;
    let v = &cfg.vocab;
    let mut sketches = Vec::with_capacity(cfg.n_users);
    let mut truth = GroundTruth::default();
    for u in 0..cfg.n_users {
        let mut rng = rng::substream(cfg.seed, u as u64);
        let sib = rng::bernoulli(&mut rng, cfg.sib_prevalence);
        let s = sketch_user(cfg, &mut rng, sib);
        let name = user_name(u);
        let terminal = sib.then(|| s.len() - 1);
        truth.users.push(UserTruth {
            user: name.clone(),
            label: Label::from_bit(u8::from(sib)),
            first_sib_index: terminal,
            first_sib_post: terminal.map(|k| format!("{name}-{k:03}")),
            first_sib_time: terminal.map(|k| cfg.start + s[k].offset),
        });
        sketches.push(s);
    }

    // Replies pick a parent uniformly among strictly earlier posts; a reply
    // with no earlier post becomes a post itself.
    let mut post_times: Vec<(i64, usize, usize)> = Vec::new();
    for (u, s) in sketches.iter().enumerate() {
        for (k, d) in s.iter().enumerate() {
            if d.kind == Kind::Post {
                post_times.push((d.offset, u, k));
            }
        }
    }
    post_times.sort_unstable();
    let mut parent_rng = rng::substream(cfg.seed, PARENT_STREAM);
    let mut parents: Vec<Vec<Option<(usize, usize)>>> =
        sketches.iter().map(|s| alloc::vec![None; s.len()]).collect();
    for (u, s) in sketches.iter_mut().enumerate() {
        for (k, d) in s.iter_mut().enumerate() {
            if d.kind != Kind::Reply {
                continue;
            }
            let earlier = post_times.partition_point(|&(t, _, _)| t < d.offset);
            if earlier == 0 {
                d.kind = Kind::Post;
            } else {
                let (_, pu, pk) = post_times[rng::index(&mut parent_rng, earlier)];
                parents[u][k] = Some((pu, pk));
            }
        }
    }

    let mut interactions = Vec::new();
    let mut labels = Vec::new();
    for (u, s) in sketches.iter().enumerate() {
        let name = user_name(u);
        for (k, d) in s.iter().enumerate() {
            let id = format!("{name}-{k:03}");
            let body = render(v, &d.body).join(" ");
            let timestamp = Timestamp(cfg.start + d.offset);
            let it = match parents[u][k] {
                Some((pu, pk)) => Interaction {
                    id: id.clone(),
                    user: name.clone(),
                    kind: Kind::Reply,
                    timestamp,
                    thread_id: format!("t-{}-{pk:03}", user_name(pu)),
                    title: None,
                    body,
                    tags: Vec::new(),
                    parent_id: Some(format!("{}-{pk:03}", user_name(pu))),
                },
                None => {
                    let label = if d.sib { Label::Sib } else { Label::NoSib };
                    labels.push(PostLabel::new(id.clone(), label, d.hard)?);
                    if d.sib {
                        truth.sib_posts.insert(id.clone());
                    }
                    if d.hard {
                        truth.hard_posts.insert(id.clone());
                    }
                    Interaction {
                        id: id.clone(),
                        user: name.clone(),
                        kind: Kind::Post,
                        timestamp,
                        thread_id: format!("t-{id}"),
                        title: Some(render(v, &d.title).join(" ")),
                        body,
                        tags: render(v, &d.tags),
                        parent_id: None,
                    }
                }
            };
            interactions.push(it);
        }
    }
    Ok((Corpus::new(interactions)?, truth, labels))
}

/// Context restriction applied by the oracle, mirroring model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleWindow {
    pub max_interactions: usize,
    pub prioritize_posts: bool,
}

fn windowed(history: &[Sketch], window: Option<OracleWindow>) -> Vec<&Sketch> {
    let Some(w) = window else {
        return history.iter().collect();
    };
    let n = w.max_interactions;
    let mut keep = alloc::vec![false; history.len()];
    if w.prioritize_posts {
        let mut left = n;
        for (i, d) in history.iter().enumerate().rev() {
            if left > 0 && d.kind == Kind::Post {
                keep[i] = true;
                left -= 1;
            }
        }
        for (i, d) in history.iter().enumerate().rev() {
            if left > 0 && d.kind == Kind::Reply {
                keep[i] = true;
                left -= 1;
            }
        }
    } else {
        let from = history.len().saturating_sub(n);
        keep[from..].iter_mut().for_each(|k| *k = true);
    }
    history.iter().zip(keep).filter(|(_, k)| *k).map(|(d, _)| d).collect()
}

/// Monte-Carlo estimate of the best achievable balanced accuracy for
/// user-level early prediction: `n_mc` simulated users (half per class) are
/// classified by the sign of the exact log-likelihood ratio of their pre-SIB
/// history. Hard posts are recognised by their SIB tag and ignored. Ties
/// score half.
pub fn bayes_oracle_rate(cfg: &GenConfig, n_mc: usize) -> Result<f64> {
    bayes_oracle_rate_windowed(cfg, n_mc, None)
}

/// As [`bayes_oracle_rate`] but only the interactions a model with the given
/// context window would see enter the likelihood ratio.
pub fn bayes_oracle_rate_windowed(
    cfg: &GenConfig,
    n_mc: usize,
    window: Option<OracleWindow>,
) -> Result<f64> {
    cfg.validate()?;
    if n_mc < 2 {
        return Err(Error::InvalidConfig("n_mc must be at least 2".to_string()));
    }
    let p0 = cfg.base_distress_rate;
    let p1 = cfg.distress_rate(true);
    let (hit, miss) = if p1 == p0 {
        (0.0, 0.0)
    } else {
        (libm::log(p1 / p0), libm::log((1.0 - p1) / (1.0 - p0)))
    };
    let mut credit = [0.0f64; 2];
    let mut count = [0usize; 2];
    for i in 0..n_mc {
        let sib = i % 2 == 1;
        let mut rng = rng::substream(rng::mix(cfg.seed, 0x0AC1E), ORACLE_STREAM + i as u64);
        let mut s = sketch_user(cfg, &mut rng, sib);
        if sib {
            s.pop();
        }
        let llr: f64 = windowed(&s, window)
            .iter()
            .filter(|d| !d.hard)
            .map(|d| d.hits as f64 * hit + (d.draws - d.hits) as f64 * miss)
            .sum();
        let c = usize::from(sib);
        count[c] += 1;
        credit[c] += if llr == 0.0 {
            0.5
        } else if (llr > 0.0) == sib {
            1.0
        } else {
            0.0
        };
    }
    Ok((credit[0] / count[0] as f64 + credit[1] / count[1] as f64) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::nearest_rank_percentile;
    use crate::text::{words, HashingTokenizer};

    fn small(n: usize, s: f64) -> GenConfig {
        GenConfig { n_users: n, signal_strength: s, ..GenConfig::default() }
    }

    #[test]
    fn default_vocabulary_is_disjoint_and_collision_free() {
        let v = Vocabulary::default();
        v.validate().unwrap();
        let tok = HashingTokenizer::new(8192);
        let mut seen: alloc::collections::BTreeMap<u32, String> = Default::default();
        for (_, pool) in v.pools() {
            for entry in pool {
                for w in words(entry) {
                    if let Some(prev) = seen.insert(tok.word_id(&w), w.clone()) {
                        assert_eq!(prev, w, "hash collision");
                    }
                }
            }
        }
    }

    #[test]
    fn vocabulary_avoids_excluded_spans_outside_explicit_pool() {
        let v = Vocabulary::default();
        for pool in [&v.neutral, &v.distress, &v.neutral_tags, &v.distress_tags] {
            for w in pool {
                for span in crate::corpus::DEFAULT_EXCLUDED_SPANS {
                    assert!(!w.contains(span), "{w} contains {span}");
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(generate_corpus(&small(0, 1.0)).is_err());
        let mut c = small(10, 1.0);
        c.sib_prevalence = 1.0;
        assert!(generate_corpus(&c).is_err());
        let mut c = small(10, 1.0);
        c.vocab.distress.push("school".into());
        assert!(generate_corpus(&c).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let (a, ta, la) = generate_corpus(&small(50, 3.0)).unwrap();
        let (b, tb, lb) = generate_corpus(&small(50, 3.0)).unwrap();
        assert_eq!(a.interactions(), b.interactions());
        assert_eq!(ta, tb);
        assert_eq!(la, lb);
    }

    #[test]
    fn sib_user_count_within_binomial_interval() {
        let cfg = GenConfig { n_users: 1000, seed: 42, ..GenConfig::default() };
        let (_, truth, _) = generate_corpus(&cfg).unwrap();
        let n = truth.sib_user_count();
        assert!((22..=59).contains(&n), "{n}");
    }

    #[test]
    fn terminal_post_is_last_explicit_and_tagged() {
        let cfg = small(400, 5.0);
        let (corpus, truth, labels) = generate_corpus(&cfg).unwrap();
        let explicit: BTreeSet<&str> = cfg.vocab.explicit.iter().map(String::as_str).collect();
        for u in &truth.users {
            let hist = corpus.user_history(&u.user);
            let has_explicit = |i: usize| {
                let it = corpus.get(i);
                let mut text = words(&it.body);
                text.extend(words(it.title.as_deref().unwrap_or("")));
                text.iter().filter(|w| explicit.contains(w.as_str())).count()
            };
            match u.label {
                Label::Sib => {
                    let last = *hist.last().unwrap();
                    let it = corpus.get(last);
                    assert_eq!(Some(&it.id), u.first_sib_post.as_ref());
                    assert_eq!(u.first_sib_index, Some(hist.len() - 1));
                    assert!(it.is_post() && has_explicit(last) >= 2);
                    assert!(it.tags.iter().any(|t| cfg.vocab.sib_tags.contains(t)));
                    for &i in &hist[..hist.len() - 1] {
                        assert!(corpus.get(i).timestamp < it.timestamp);
                        assert_eq!(has_explicit(i), 0);
                    }
                }
                Label::NoSib => {
                    assert!(hist.iter().all(|&i| has_explicit(i) == 0));
                }
            }
        }
        assert_eq!(labels.len(), corpus.posts().count());
        for l in &labels {
            assert_eq!(l.label == Label::Sib, truth.is_sib_post(&l.post_id));
            assert_eq!(l.hard, truth.hard_posts.contains(&l.post_id));
        }
    }

    #[test]
    fn history_quantiles_match_targets() {
        let (corpus, truth, _) = generate_corpus(&small(3000, 1.0)).unwrap();
        let lens: Vec<usize> = truth
            .users
            .iter()
            .map(|u| corpus.user_history(&u.user).len() - usize::from(u.label == Label::Sib))
            .collect();
        let q = |p| nearest_rank_percentile(&lens, p).unwrap() as i64;
        assert!((q(25.0) - 1).abs() <= 1);
        assert!((q(50.0) - 3).abs() <= 1);
        assert!((q(75.0) - 8).abs() <= 1);
    }

    #[test]
    fn replies_point_to_earlier_posts() {
        let (corpus, _, _) = generate_corpus(&small(300, 1.0)).unwrap();
        let mut replies = 0;
        for it in corpus.interactions() {
            if let Some(p) = corpus.parent_of(it) {
                replies += 1;
                assert!(p.timestamp < it.timestamp);
                assert_eq!(p.thread_id, it.thread_id);
            }
        }
        assert!(replies > 0);
    }

    #[test]
    fn zero_signal_gives_equal_distress_rates() {
        let cfg = small(3000, 0.0);
        let (corpus, truth, _) = generate_corpus(&cfg).unwrap();
        let distress: BTreeSet<&str> = cfg.vocab.distress.iter().map(String::as_str).collect();
        let mut counts = [[0usize; 2]; 2];
        for u in &truth.users {
            let hist = corpus.user_history(&u.user);
            let keep = hist.len() - usize::from(u.label == Label::Sib);
            for &i in &hist[..keep] {
                let it = corpus.get(i);
                if truth.hard_posts.contains(&it.id) {
                    continue;
                }
                for w in words(&it.body) {
                    counts[u.label.bit() as usize][usize::from(distress.contains(w.as_str()))] += 1;
                }
            }
        }
        let rate = |c: [usize; 2]| c[1] as f64 / (c[0] + c[1]) as f64;
        assert!((rate(counts[0]) - rate(counts[1])).abs() < 0.01);
    }

    #[test]
    fn oracle_limits_and_monotonicity() {
        let at = |s| bayes_oracle_rate(&small(100, s), 4000).unwrap();
        let zero = at(0.0);
        assert!((zero - 0.5).abs() <= 0.02, "{zero}");
        let (a, b, c) = (at(0.5), at(2.0), at(9.0));
        assert!(a <= b + 0.02 && b <= c + 0.02, "{a} {b} {c}");
        assert!(at(18.0) > 0.97);
    }

    #[test]
    fn wider_window_never_hurts_the_oracle() {
        let cfg = small(100, 1.0);
        let w = |n| Some(OracleWindow { max_interactions: n, prioritize_posts: true });
        let one = bayes_oracle_rate_windowed(&cfg, 4000, w(1)).unwrap();
        let fifteen = bayes_oracle_rate_windowed(&cfg, 4000, w(15)).unwrap();
        assert!(fifteen > one + 0.03, "{one} {fifteen}");
    }
}
