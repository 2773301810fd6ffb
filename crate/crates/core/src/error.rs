use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Interaction at `index` (0-based, input order) violates the schema.
    InvalidInteraction { index: usize, reason: String },
    DuplicateId { index: usize, id: String },
    DanglingParent { index: usize, parent_id: String },
    /// Sampling request larger than the eligible pool.
    PoolTooSmall { requested: usize, available: usize },
    LengthMismatch { left: usize, right: usize },
    EmptyInput(&'static str),
    /// A class has too few members for the requested split or resampling.
    ClassTooSmall { class: u8, have: usize, need: usize },
    UnlabeledPost(String),
    EmptyHistory(String),
    ContextTooLong { len: usize, max: usize },
    ContextTooLargeForExact { len: usize, max: usize },
    NotSibUser(String),
    InvalidConfig(String),
    /// Non-finite training loss.
    Divergence { epoch: usize, step: usize, loss: f64 },
    UnknownParameter(String),
    ShapeMismatch { name: String, expected: (usize, usize), found: (usize, usize) },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInteraction { index, reason } => {
                write!(f, "interaction #{index}: {reason}")
            }
            Error::DuplicateId { index, id } => write!(f, "interaction #{index}: duplicate id {id:?}"),
            Error::DanglingParent { index, parent_id } => {
                write!(f, "interaction #{index}: dangling parent {parent_id:?}")
            }
            Error::PoolTooSmall { requested, available } => write!(
                f,
                "requested {requested} samples but the eligible pool has {available}"
            ),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::ClassTooSmall { class, have, need } => write!(
                f,
                "class {class} has {have} records, at least {need} required"
            ),
            Error::UnlabeledPost(id) => write!(f, "post {id:?} has no label"),
            Error::EmptyHistory(user) => write!(f, "user {user:?} has an empty history"),
            Error::ContextTooLong { len, max } => {
                write!(f, "context of {len} interactions exceeds the window of {max}")
            }
            Error::ContextTooLargeForExact { len, max } => write!(
                f,
                "exact Shapley values need at most {max} interactions, got {len}"
            ),
            Error::NotSibUser(user) => write!(f, "user {user:?} is not labelled SIB"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Divergence { epoch, step, loss } => write!(
                f,
                "training diverged at epoch {epoch}, step {step} (loss = {loss})"
            ),
            Error::UnknownParameter(name) => write!(f, "unknown parameter tensor {name:?}"),
            Error::ShapeMismatch { name, expected, found } => write!(
                f,
                "tensor {name:?}: expected shape {expected:?}, found {found:?}"
            ),
        }
    }
}

impl core::error::Error for Error {}
