use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the toolkit. The CLI maps variants to
/// exit codes, so keep failure classes distinguishable rather than stringly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: duplicate document id {id:?}")]
    DuplicateDocId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("corpora were preprocessed with different pipeline configs ({left} vs {right})")]
    PipelineMismatch { left: String, right: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown word {0:?}")]
    UnknownWord(String),

    #[error("word {0:?} has no embedding (no usable context in this corpus)")]
    NotEmbeddable(String),

    #[error("probability vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("probability vector has a non-positive entry at index {0}; smooth before comparing")]
    ZeroProbability(usize),

    #[error("need {needed} eligible words but only {available} have frequency >= {min_freq}")]
    InsufficientEligible {
        needed: usize,
        available: usize,
        min_freq: u64,
    },

    #[error("split produced an empty side (fraction {fraction}, {docs} documents)")]
    EmptySplit { fraction: f64, docs: usize },

    #[error("artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error("workspace is stale: {0}")]
    StaleWorkspace(String),

    #[error("workspace is locked by {0} (remove the file if no build is running)")]
    WorkspaceLocked(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from, for multi-stage
    /// drivers like the simulation harness.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
