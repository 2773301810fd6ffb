//! JSON Lines files: corpus, post labels, ground truth, user datasets and
//! explanations. Timestamps are ISO-8601 in UTC with a `Z` suffix.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use earlysib_core::corpus::{Corpus, Interaction, Kind, Label, PostLabel, Timestamp};
use earlysib_core::explain::{ComplexityScore, Explanation, LeadTimeStat};
use earlysib_core::synthgen::UserTruth;
use earlysib_core::userset::UserRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

pub fn format_time(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t.seconds(), 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.seconds().to_string())
}

pub fn parse_time(s: &str) -> std::result::Result<Timestamp, String> {
    let d = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
    Ok(Timestamp(d.timestamp()))
}

/// One interaction as it appears on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InteractionLine {
    id: String,
    user: String,
    kind: Kind,
    timestamp: String,
    thread_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_id: Option<String>,
}

impl From<&Interaction> for InteractionLine {
    fn from(it: &Interaction) -> Self {
        Self {
            id: it.id.clone(),
            user: it.user.clone(),
            kind: it.kind,
            timestamp: format_time(it.timestamp),
            thread_id: it.thread_id.clone(),
            title: it.title.clone(),
            body: it.body.clone(),
            tags: it.tags.clone(),
            parent_id: it.parent_id.clone(),
        }
    }
}

impl InteractionLine {
    fn into_interaction(self) -> std::result::Result<Interaction, String> {
        if self.user.is_empty() || self.user.contains('@') || self.user.chars().any(char::is_whitespace) {
            return Err(format!("user {:?} is not a pseudonymized token", self.user));
        }
        Ok(Interaction {
            timestamp: parse_time(&self.timestamp)?,
            id: self.id,
            user: self.user,
            kind: self.kind,
            thread_id: self.thread_id,
            title: self.title,
            body: self.body,
            tags: self.tags,
            parent_id: self.parent_id,
        })
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| PipelineError::io(path, e))
}

/// Parses every nonblank line, converting each record with `convert`.
/// Errors carry the 1-based line number.
fn read_lines<T: DeserializeOwned, U>(
    path: &Path,
    reader: impl BufRead,
    mut convert: impl FnMut(T) -> std::result::Result<U, String>,
) -> Result<(Vec<U>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PipelineError::BadLine { path: path.into(), line: i + 1, message };
        let record: T = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        out.push(convert(record).map_err(bad)?);
        lines.push(i + 1);
    }
    Ok((out, lines))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(read_lines(path, open(path)?, Ok)?.0)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| PipelineError::Runtime(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Reads and validates a corpus; the whole file is rejected on the first
/// violation, reported with its line number.
pub fn parse_corpus(path: &Path, reader: impl BufRead) -> Result<Corpus> {
    let (items, lines) = read_lines(path, reader, InteractionLine::into_interaction)?;
    Corpus::new(items).map_err(|e| {
        use earlysib_core::Error as E;
        let at = match &e {
            E::InvalidInteraction { index, .. } | E::DuplicateId { index, .. } | E::DanglingParent { index, .. } => {
                Some(lines[*index])
            }
            _ => None,
        };
        match at {
            Some(line) => PipelineError::BadLine { path: path.into(), line, message: e.to_string() },
            None => e.into(),
        }
    })
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(path, open(path)?)
}

/// Writes interactions in corpus order.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_jsonl(path, corpus.interactions().iter().map(InteractionLine::from))
}

pub fn read_labels(path: &Path) -> Result<Vec<PostLabel>> {
    let (labels, _) = read_lines(path, open(path)?, |l: PostLabel| {
        PostLabel::new(l.post_id, l.label, l.hard).map_err(|e| e.to_string())
    })?;
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[PostLabel]) -> Result<()> {
    write_jsonl(path, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLine {
    pub user: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_sib_post: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_sib_time: Option<String>,
}

impl From<&UserTruth> for TruthLine {
    fn from(t: &UserTruth) -> Self {
        Self {
            user: t.user.clone(),
            label: t.label,
            first_sib_post: t.first_sib_post.clone(),
            first_sib_time: t.first_sib_time.map(|s| format_time(Timestamp(s))),
        }
    }
}

/// A user of the user-level dataset; history as interaction ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserLine {
    pub user: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_sib_time: Option<String>,
    pub history: Vec<String>,
}

pub fn write_users(path: &Path, corpus: &Corpus, records: &[UserRecord]) -> Result<()> {
    write_jsonl(
        path,
        records.iter().map(|r| UserLine {
            user: r.user.clone(),
            label: r.label,
            first_sib_time: r.first_sib_time.map(format_time),
            history: r.history.iter().map(|&i| corpus.get(i).id.clone()).collect(),
        }),
    )
}

/// Reads a user dataset, resolving history ids against `corpus`.
pub fn read_users(path: &Path, corpus: &Corpus) -> Result<Vec<UserRecord>> {
    let (records, _) = read_lines(path, open(path)?, |u: UserLine| {
        let history = u
            .history
            .iter()
            .map(|id| corpus.index_of(id).ok_or_else(|| format!("unknown interaction {id:?}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let first_sib_time = u.first_sib_time.as_deref().map(parse_time).transpose()?;
        Ok(UserRecord { user: u.user, label: u.label, history, first_sib_time })
    })?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationLine {
    #[serde(flatten)]
    pub explanation: Explanation,
    pub complexity: ComplexityScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_time: Option<LeadTimeStat>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const THREAD: &str = r#"{"id":"p1","user":"u1","kind":"post","timestamp":"2020-01-01T00:00:00Z","thread_id":"t1","title":"hoi","body":"tekst","tags":["zm"]}
{"id":"r1","user":"u2","kind":"reply","timestamp":"2020-01-01T01:00:00Z","thread_id":"t1","body":"a","parent_id":"p1"}
{"id":"r2","user":"u3","kind":"reply","timestamp":"2020-01-01T02:00:00Z","thread_id":"t1","body":"b","parent_id":"p1"}
"#;

    fn parse(s: &str) -> Result<Corpus> {
        parse_corpus(Path::new("mem"), Cursor::new(s.as_bytes()))
    }

    fn line_of(e: PipelineError) -> usize {
        match e {
            PipelineError::BadLine { line, .. } => line,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn times_round_trip_with_z() {
        let t = parse_time("2020-01-01T00:00:00Z").unwrap();
        assert_eq!(t, Timestamp(1_577_836_800));
        assert_eq!(format_time(t), "2020-01-01T00:00:00Z");
        assert_eq!(parse_time("2020-01-01T01:00:00+01:00").unwrap(), t);
        assert!(parse_time("yesterday").is_err());
    }

    #[test]
    fn reads_a_thread() {
        let c = parse(THREAD).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.thread_count(), 1);
        assert_eq!(c.user_history("u1").len(), 1);
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn reports_line_numbers() {
        let dangling = THREAD.replace(r#""parent_id":"p1"}
{"id":"r2""#, r#""parent_id":"nope"}
{"id":"r2""#);
        let e = parse(&dangling).unwrap_err();
        assert!(e.to_string().contains("dangling parent"), "{e}");
        assert_eq!(line_of(e), 2);

        let missing = THREAD.replace(r#","body":"b""#, "");
        assert_eq!(line_of(parse(&missing).unwrap_err()), 3);
        assert_eq!(line_of(parse("{}\nnot json").unwrap_err()), 1);
        let email = THREAD.replace(r#""user":"u3""#, r#""user":"a@b.nl""#);
        assert_eq!(line_of(parse(&email).unwrap_err()), 3);
        let dup = THREAD.replace(r#""id":"r2""#, r#""id":"r1""#);
        assert_eq!(line_of(parse(&dup).unwrap_err()), 3);
    }

    #[test]
    fn corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let c = parse(THREAD).unwrap();
        write_corpus(&path, &c).unwrap();
        assert_eq!(read_corpus(&path).unwrap().interactions(), c.interactions());
    }

    #[test]
    fn labels_and_users_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse(THREAD).unwrap();
        let labels = vec![PostLabel::new("p1", Label::Sib, false).unwrap()];
        let lp = dir.path().join("l.jsonl");
        write_labels(&lp, &labels).unwrap();
        assert_eq!(read_labels(&lp).unwrap(), labels);
        std::fs::write(&lp, r#"{"post_id":"p1","label":1,"hard":true}"#).unwrap();
        assert!(read_labels(&lp).is_err());

        let users = vec![UserRecord {
            user: "u2".into(),
            label: Label::Sib,
            history: vec![c.index_of("r1").unwrap()],
            first_sib_time: Some(Timestamp(1_577_900_000)),
        }];
        let up = dir.path().join("u.jsonl");
        write_users(&up, &c, &users).unwrap();
        assert_eq!(read_users(&up, &c).unwrap(), users);
    }
}
