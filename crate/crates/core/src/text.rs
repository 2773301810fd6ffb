//! Word splitting and the hashing tokenizer shared by both encoders.

use alloc::string::String;
use alloc::vec::Vec;

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
/// Number of reserved ids at the bottom of the vocabulary.
pub const RESERVED: u32 = 3;

/// Lowercased alphanumeric runs of `text`.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// True when the word sequence of `phrase` occurs contiguously in `haystack`.
pub fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > haystack.len() {
        return false;
    }
    haystack.windows(phrase.len()).any(|w| w == phrase)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic lowercase word tokenizer hashing into a fixed vocabulary.
///
/// The mapping does not depend on any data, so fitting folds cannot leak
/// vocabulary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingTokenizer {
    vocab_size: u32,
}

impl HashingTokenizer {
    pub fn new(vocab_size: u32) -> Self {
        assert!(vocab_size > RESERVED, "vocabulary must exceed the reserved ids");
        Self { vocab_size }
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn word_id(&self, word: &str) -> u32 {
        RESERVED + (fnv1a(word.as_bytes()) % (self.vocab_size - RESERVED) as u64) as u32
    }

    /// Token ids of `text` without special tokens.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        words(text).iter().map(|w| self.word_id(w)).collect()
    }
}
