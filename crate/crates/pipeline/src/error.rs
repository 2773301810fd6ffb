use std::path::PathBuf;

/// Failures of a pipeline command, split by exit status: bad input or
/// configuration exits with 1, anything that breaks while running exits
/// with 2.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: line {line}: {message}")]
    BadLine { path: PathBuf, line: usize, message: String },

    #[error("missing upstream artifact `{name}` (expected at {path})")]
    MissingArtifact { name: String, path: PathBuf },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] earlysib_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use earlysib_core::Error as E;
        match self {
            Self::BadLine { .. } | Self::MissingArtifact { .. } | Self::Config(_) | Self::Validation(_) => 1,
            Self::Core(E::Divergence { .. }) => 2,
            Self::Core(_) => 1,
            Self::Io { .. } | Self::Runtime(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
