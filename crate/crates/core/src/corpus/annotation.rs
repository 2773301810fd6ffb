//! Candidate filtering, negative sampling and inter-rater agreement.

use alloc::string::String;
use alloc::vec::Vec;

use super::{Corpus, Interaction};
use crate::error::{Error, Result};
use crate::rng;
use crate::text::{contains_phrase, words};

/// Forum tags used to pre-filter posts for SIB annotation.
pub const DEFAULT_SIB_TAGS: [&str; 6] = [
    "zelfmoord",
    "zm",
    "zelfmoordgedachten",
    "denken aan zelfmoord",
    "suicidaal",
    "zelfdoding",
];

/// Spans that disqualify a post from the random No-SIB sample.
pub const DEFAULT_EXCLUDED_SPANS: [&str; 4] = ["ik wil niet meer", "dood", "einde aan", "doden"];

pub fn normalize_tag(tag: &str) -> String {
    tag.trim().to_lowercase()
}

fn normalized_set<S: AsRef<str>>(tags: &[S]) -> Vec<String> {
    let mut out: Vec<String> = tags.iter().map(|t| normalize_tag(t.as_ref())).collect();
    out.sort();
    out.dedup();
    out
}

/// Posts whose tag list intersects `sib_tags` (after trimming and
/// lowercasing), in chronological order.
pub fn filter_annotation_candidates<'c, S: AsRef<str>>(
    corpus: &'c Corpus,
    sib_tags: &[S],
) -> Vec<&'c Interaction> {
    let wanted = normalized_set(sib_tags);
    corpus
        .posts()
        .filter(|p| p.tags.iter().any(|t| wanted.binary_search(&normalize_tag(t)).is_ok()))
        .collect()
}

/// True when a post carries none of the excluded tags (exact tag match, or
/// as a word sequence in title/body) and none of the excluded spans
/// (case-insensitive substring of title, body and joined tags).
pub fn is_negative_eligible<S: AsRef<str>, T: AsRef<str>>(
    post: &Interaction,
    excluded_tags: &[S],
    excluded_spans: &[T],
) -> bool {
    if !post.is_post() {
        return false;
    }
    let tags = normalized_set(excluded_tags);
    if post.tags.iter().any(|t| tags.binary_search(&normalize_tag(t)).is_ok()) {
        return false;
    }

    let title = post.title.as_deref().unwrap_or("");
    let mut haystack = String::with_capacity(title.len() + post.body.len() + 16);
    haystack.push_str(title);
    haystack.push(' ');
    haystack.push_str(&post.body);
    haystack.push(' ');
    haystack.push_str(&post.tags.join(" "));
    let lowered = haystack.to_lowercase();
    if excluded_spans.iter().any(|s| {
        let s = s.as_ref().trim().to_lowercase();
        !s.is_empty() && lowered.contains(s.as_str())
    }) {
        return false;
    }

    let text_words = words(&lowered);
    !tags.iter().any(|t| contains_phrase(&text_words, &words(t)))
}

/// Seeded uniform sample without replacement of `n` eligible posts, returned
/// in chronological order.
pub fn sample_negatives<'c, S: AsRef<str>, T: AsRef<str>>(
    corpus: &'c Corpus,
    n: usize,
    excluded_tags: &[S],
    excluded_spans: &[T],
    seed: u64,
) -> Result<Vec<&'c Interaction>> {
    let pool: Vec<&Interaction> = corpus
        .posts()
        .filter(|p| is_negative_eligible(p, excluded_tags, excluded_spans))
        .collect();
    if n > pool.len() {
        return Err(Error::PoolTooSmall { requested: n, available: pool.len() });
    }
    let mut r = rng::seeded(seed);
    Ok(rng::sample_indices(&mut r, pool.len(), n).into_iter().map(|i| pool[i]).collect())
}

/// Cohen's kappa for two binary raters (nonzero counts as 1).
pub fn cohens_kappa(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("label vectors"));
    }
    let n = a.len() as f64;
    let mut agree = 0usize;
    let (mut a1, mut b1) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x != 0, y != 0);
        agree += (x == y) as usize;
        a1 += x as usize;
        b1 += y as usize;
    }
    let p_o = agree as f64 / n;
    let (pa, pb) = (a1 as f64 / n, b1 as f64 / n);
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if p_e >= 1.0 {
        // Both raters constant: kappa is 1 on agreement.
        return Ok(if agree == a.len() { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
