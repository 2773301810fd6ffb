//! User-level dataset: labels, pre-SIB histories, context selection and
//! training-set resampling.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, Kind, Label, PostLabel, Timestamp};
use crate::error::{Error, Result};
use crate::metrics::nearest_rank_percentile;
use crate::rng;

/// A user's label and the interactions strictly before their first SIB
/// post (the whole history for No-SIB users).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub user: String,
    pub label: Label,
    /// Corpus indexes, chronological.
    pub history: Vec<usize>,
    pub first_sib_time: Option<Timestamp>,
}

/// Which interactions of a history enter the model, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ContextConfig {
    /// Maximum number of interactions.
    pub max_interactions: usize,
    pub prioritize_posts: bool,
    /// Encode replies together with the title and body of their parent.
    pub replies_in_context: bool,
    /// "User posted:" / "User replied to:" prefixes in the title+tag string.
    pub include_prefix: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self { max_interactions: 30, prioritize_posts: true, replies_in_context: false, include_prefix: true }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_interactions == 0 {
            return Err(Error::InvalidConfig("context window must hold at least one interaction".into()));
        }
        Ok(())
    }
}

/// Users left out of the modeling dataset because nothing precedes their
/// first SIB post (or they have no interactions at all).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExclusionReport {
    pub sib_users_total: usize,
    pub nosib_users_total: usize,
    pub excluded_sib: Vec<String>,
    pub excluded_nosib: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserDataset {
    pub records: Vec<UserRecord>,
    pub report: ExclusionReport,
}

impl UserDataset {
    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label.bit()).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        class_counts(&self.records)
    }
}

pub fn class_counts(records: &[UserRecord]) -> [usize; 2] {
    let mut c = [0; 2];
    for r in records {
        c[r.label.bit() as usize] += 1;
    }
    c
}

/// One record per user with at least one pre-SIB interaction, in user-id
/// order. History is cut at the first SIB post; everything from it onwards
/// is discarded.
pub fn build_user_dataset(corpus: &Corpus, labels: &[PostLabel]) -> Result<UserDataset> {
    let by_post: BTreeMap<&str, Label> = labels.iter().map(|l| (l.post_id.as_str(), l.label)).collect();
    let mut out = UserDataset::default();
    for (user, hist) in corpus.users() {
        let mut cut = None;
        for (pos, &i) in hist.iter().enumerate() {
            let it = corpus.get(i);
            if it.kind != Kind::Post {
                continue;
            }
            match by_post.get(it.id.as_str()) {
                None => return Err(Error::UnlabeledPost(it.id.clone())),
                Some(Label::Sib) if cut.is_none() => cut = Some(pos),
                Some(_) => {}
            }
        }
        let (label, history, first) = match cut {
            Some(pos) => (Label::Sib, hist[..pos].to_vec(), Some(corpus.get(hist[pos]).timestamp)),
            None => (Label::NoSib, hist.to_vec(), None),
        };
        // Same-second interactions before the SIB post are not strictly earlier.
        let history: Vec<usize> = match first {
            Some(t) => history.into_iter().filter(|&i| corpus.get(i).timestamp < t).collect(),
            None => history,
        };
        match label {
            Label::Sib => out.report.sib_users_total += 1,
            Label::NoSib => out.report.nosib_users_total += 1,
        }
        if history.is_empty() {
            match label {
                Label::Sib => out.report.excluded_sib.push(user.into()),
                Label::NoSib => out.report.excluded_nosib.push(user.into()),
            }
            continue;
        }
        out.records.push(UserRecord { user: user.into(), label, history, first_sib_time: first });
    }
    Ok(out)
}

/// Interactions fed to the model, chronological. With post prioritisation
/// the newest posts fill the window first and the newest replies take the
/// remaining slots; otherwise the newest interactions of any kind are used.
pub fn select_context(corpus: &Corpus, record: &UserRecord, cfg: &ContextConfig) -> Result<Vec<usize>> {
    if record.history.is_empty() {
        return Err(Error::EmptyHistory(record.user.clone()));
    }
    cfg.validate()?;
    let n = cfg.max_interactions;
    let h = &record.history;
    if !cfg.prioritize_posts {
        return Ok(h[h.len().saturating_sub(n)..].to_vec());
    }
    let mut keep = alloc::vec![false; h.len()];
    let mut left = n;
    for want_post in [true, false] {
        for (k, &i) in h.iter().enumerate().rev() {
            if left == 0 {
                break;
            }
            if corpus.get(i).is_post() == want_post {
                keep[k] = true;
                left -= 1;
            }
        }
    }
    Ok(h.iter().zip(keep).filter(|(_, k)| *k).map(|(&i, _)| i).collect())
}

/// Positions of `labels` kept after downsampling class 0 so that class 1
/// makes up `target` of the result (nearest achievable count). Class 1 is
/// never dropped; if its natural share already reaches `target` nothing is
/// removed. Returned positions are ascending.
pub fn resample_indices(labels: &[Label], target: f64, seed: u64) -> Result<Vec<usize>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidConfig("resampling target must lie in (0, 1)".into()));
    }
    let ones: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Sib).collect();
    let zeros: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::NoSib).collect();
    if ones.is_empty() {
        return Err(Error::ClassTooSmall { class: 1, have: 0, need: 1 });
    }
    if zeros.is_empty() {
        return Err(Error::ClassTooSmall { class: 0, have: 0, need: 1 });
    }
    let wanted = libm::round(ones.len() as f64 * (1.0 - target) / target) as usize;
    if wanted >= zeros.len() {
        return Ok((0..labels.len()).collect());
    }
    let mut r = rng::seeded(seed);
    let picked = rng::sample_indices(&mut r, zeros.len(), wanted.max(1));
    let mut out: Vec<usize> = ones;
    out.extend(picked.into_iter().map(|k| zeros[k]));
    out.sort_unstable();
    Ok(out)
}

pub fn resample_training(records: &[UserRecord], target: f64, seed: u64) -> Result<Vec<UserRecord>> {
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    Ok(resample_indices(&labels, target, seed)?.into_iter().map(|i| records[i].clone()).collect())
}

/// Class counts and nearest-rank history-length percentiles.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryStats {
    pub users: usize,
    pub sib_users: usize,
    pub nosib_users: usize,
    pub p25: usize,
    pub p50: usize,
    pub p75: usize,
    pub max: usize,
}

pub fn history_stats(records: &[UserRecord]) -> Option<HistoryStats> {
    let lens: Vec<usize> = records.iter().map(|r| r.history.len()).collect();
    let [nosib, sib] = class_counts(records);
    Some(HistoryStats {
        users: records.len(),
        sib_users: sib,
        nosib_users: nosib,
        p25: nearest_rank_percentile(&lens, 25.0)?,
        p50: nearest_rank_percentile(&lens, 50.0)?,
        p75: nearest_rank_percentile(&lens, 75.0)?,
        max: *lens.iter().max()?,
    })
}

/// Share of histories with at most `len` interactions, in percent.
pub fn percentile_rank(records: &[UserRecord], len: usize) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let at_most = records.iter().filter(|r| r.history.len() <= len).count();
    100.0 * at_most as f64 / records.len() as f64
}
