//! Forum data model and validated corpus.

mod annotation;

pub use annotation::{
    cohens_kappa, filter_annotation_candidates, is_negative_eligible, normalize_tag,
    sample_negatives, DEFAULT_EXCLUDED_SPANS, DEFAULT_SIB_TAGS,
};

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const SECONDS_PER_DAY: i64 = 86_400;

    pub fn seconds(self) -> i64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Kind {
    Post,
    Reply,
}

/// A forum post or a reply to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub id: String,
    pub user: String,
    pub kind: Kind,
    pub timestamp: Timestamp,
    pub thread_id: String,
    /// Present iff `kind` is [`Kind::Post`].
    pub title: Option<String>,
    pub body: String,
    /// Posts only; may be empty.
    pub tags: Vec<String>,
    /// Present iff `kind` is [`Kind::Reply`].
    pub parent_id: Option<String>,
}

impl Interaction {
    pub fn is_post(&self) -> bool {
        self.kind == Kind::Post
    }

    /// Chronological sort key; ties broken by id.
    pub fn order_key(&self) -> (Timestamp, &str) {
        (self.timestamp, self.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "u8", try_from = "u8"))]
pub enum Label {
    NoSib = 0,
    Sib = 1,
}

impl Label {
    pub fn from_bit(bit: u8) -> Label {
        if bit == 0 {
            Label::NoSib
        } else {
            Label::Sib
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.bit()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> core::result::Result<Self, String> {
        match v {
            0 => Ok(Label::NoSib),
            1 => Ok(Label::Sib),
            other => Err(alloc::format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// Binary SIB label of a post. `hard` marks No-SIB posts that still use
/// suicide-related language.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PostLabel {
    pub post_id: String,
    pub label: Label,
    #[cfg_attr(feature = "serde", serde(default))]
    pub hard: bool,
}

impl PostLabel {
    pub fn new(post_id: impl Into<String>, label: Label, hard: bool) -> Result<Self> {
        let post_id = post_id.into();
        if hard && label == Label::Sib {
            return Err(Error::InvalidConfig(alloc::format!(
                "post {post_id:?}: a hard instance must be labelled No-SIB"
            )));
        }
        Ok(Self { post_id, label, hard })
    }
}

/// Users are pseudonymised upstream; we only check the token is opaque.
fn is_opaque_user(user: &str) -> bool {
    !user.is_empty() && !user.contains('@') && !user.chars().any(char::is_whitespace)
}

fn check_shape(index: usize, it: &Interaction) -> Result<()> {
    let invalid = |reason: &str| {
        Err(Error::InvalidInteraction { index, reason: reason.to_string() })
    };
    if it.id.is_empty() {
        return invalid("empty id");
    }
    if !is_opaque_user(&it.user) {
        return invalid("user must be an opaque pseudonym (no '@', no whitespace)");
    }
    if it.thread_id.is_empty() {
        return invalid("empty thread_id");
    }
    match it.kind {
        Kind::Post => {
            if it.title.is_none() {
                return invalid("post without title");
            }
            if it.parent_id.is_some() {
                return invalid("post with parent_id");
            }
        }
        Kind::Reply => {
            if it.title.is_some() {
                return invalid("reply with title");
            }
            if !it.tags.is_empty() {
                return invalid("reply with tags");
            }
            if it.parent_id.is_none() {
                return invalid("reply without parent_id");
            }
        }
    }
    Ok(())
}

/// Immutable, validated collection of interactions with lookup indexes.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    interactions: Vec<Interaction>,
    by_id: BTreeMap<String, usize>,
    by_user: BTreeMap<String, Vec<usize>>,
    by_thread: BTreeMap<String, Vec<usize>>,
    chronological: Vec<usize>,
}

impl Corpus {
    /// Validates `interactions` and builds the indexes. Any violation rejects
    /// the whole input; the error carries the offending input position.
    pub fn new(interactions: Vec<Interaction>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for (index, it) in interactions.iter().enumerate() {
            check_shape(index, it)?;
            if by_id.insert(it.id.clone(), index).is_some() {
                return Err(Error::DuplicateId { index, id: it.id.clone() });
            }
        }
        for (index, it) in interactions.iter().enumerate() {
            if let Some(parent) = &it.parent_id {
                match by_id.get(parent) {
                    None => {
                        return Err(Error::DanglingParent { index, parent_id: parent.clone() })
                    }
                    Some(&p) if interactions[p].kind != Kind::Post => {
                        return Err(Error::InvalidInteraction {
                            index,
                            reason: alloc::format!("parent {parent:?} is not a post"),
                        })
                    }
                    Some(_) => {}
                }
            }
        }

        let mut chronological: Vec<usize> = (0..interactions.len()).collect();
        chronological.sort_by(|&a, &b| interactions[a].order_key().cmp(&interactions[b].order_key()));

        let mut by_user: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_thread: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for &i in &chronological {
            let it = &interactions[i];
            by_user.entry(it.user.clone()).or_default().push(i);
            by_thread.entry(it.thread_id.clone()).or_default().push(i);
        }
        Ok(Self { interactions, by_id, by_user, by_thread, chronological })
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Interactions in input order.
    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn get(&self, index: usize) -> &Interaction {
        &self.interactions[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&Interaction> {
        self.index_of(id).map(|i| &self.interactions[i])
    }

    /// Parent post of a reply.
    pub fn parent_of(&self, it: &Interaction) -> Option<&Interaction> {
        it.parent_id.as_deref().and_then(|p| self.by_id(p))
    }

    /// Indexes of all interactions in chronological order.
    pub fn chronological(&self) -> &[usize] {
        &self.chronological
    }

    /// Posts in chronological order.
    pub fn posts(&self) -> impl Iterator<Item = &Interaction> + '_ {
        self.chronological.iter().map(|&i| &self.interactions[i]).filter(|it| it.is_post())
    }

    pub fn users(&self) -> impl Iterator<Item = (&str, &[usize])> + '_ {
        self.by_user.iter().map(|(u, v)| (u.as_str(), v.as_slice()))
    }

    pub fn user_count(&self) -> usize {
        self.by_user.len()
    }

    /// A user's interaction indexes, chronological.
    pub fn user_history(&self, user: &str) -> &[usize] {
        self.by_user.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn thread(&self, thread_id: &str) -> &[usize] {
        self.by_thread.get(thread_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn thread_count(&self) -> usize {
        self.by_thread.len()
    }

    pub fn into_interactions(self) -> Vec<Interaction> {
        self.interactions
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn empty_corpus() {
        let c = Corpus::new(vec![]).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.thread_count(), 0);
    }

    #[test]
    fn one_post_two_replies() {
        let c = Corpus::new(vec![
            post("p1", "alice", 10, "t", "b", &[]),
            reply("r1", "bob", 20, "p1", "x"),
            reply("r2", "alice", 30, "p1", "y"),
        ])
        .unwrap();
        assert_eq!(c.thread_count(), 1);
        assert_eq!(c.thread("p1").len(), 3);
        assert_eq!(c.user_history("alice"), &[0, 2]);
        assert_eq!(c.user_history("bob"), &[1]);
        assert_eq!(c.parent_of(c.get(1)).unwrap().id, "p1");
    }

    #[test]
    fn dangling_parent_rejected() {
        let err = Corpus::new(vec![reply("r1", "bob", 20, "nope", "x")]).unwrap_err();
        assert!(matches!(err, Error::DanglingParent { index: 0, .. }));
        assert!(alloc::format!("{err}").contains("dangling parent"));
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = Corpus::new(vec![
            post("p1", "a", 1, "t", "b", &[]),
            post("p1", "b", 2, "t", "b", &[]),
        ])
        .unwrap_err();
        assert_eq!(err, Error::DuplicateId { index: 1, id: "p1".into() });
    }

    #[test]
    fn shape_violations_rejected() {
        let mut p = post("p1", "a", 1, "t", "b", &[]);
        p.title = None;
        assert!(Corpus::new(vec![p]).is_err());
        let mut r = reply("r1", "a", 2, "p0", "b");
        r.tags = vec!["x".into()];
        let p0 = post("p0", "a", 1, "t", "b", &[]);
        assert!(Corpus::new(vec![p0.clone(), r]).is_err());
        let mut named = post("p2", "jan@mail.nl", 1, "t", "b", &[]);
        assert!(Corpus::new(vec![named.clone()]).is_err());
        named.user = "jan de vries".into();
        assert!(Corpus::new(vec![named]).is_err());
        let reply_to_reply = reply("r3", "a", 3, "r2", "b");
        let r2 = reply("r2", "a", 2, "p0", "b");
        assert!(Corpus::new(vec![p0, r2, reply_to_reply]).is_err());
    }

    #[test]
    fn user_history_ties_broken_by_id() {
        let c = Corpus::new(vec![
            post("pb", "a", 5, "t", "b", &[]),
            post("pa", "a", 5, "t", "b", &[]),
            post("pc", "a", 1, "t", "b", &[]),
        ])
        .unwrap();
        let ids: Vec<&str> = c.user_history("a").iter().map(|&i| c.get(i).id.as_str()).collect();
        assert_eq!(ids, vec!["pc", "pa", "pb"]);
    }

    #[test]
    fn hard_label_must_be_negative() {
        assert!(PostLabel::new("p", Label::Sib, true).is_err());
        assert!(PostLabel::new("p", Label::NoSib, true).is_ok());
    }
}
