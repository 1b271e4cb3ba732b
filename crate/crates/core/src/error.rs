use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SchedError>;

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("schedule is not a permutation of 0..{n}: {detail}")]
    InvalidPermutation { n: usize, detail: String },

    #[error("assignment matrix violates row/column sums: {0}")]
    InvalidAssignment(String),

    #[error("instance has {instance} tasks but schedule has {schedule}")]
    SizeMismatch { instance: usize, schedule: usize },

    #[error("unknown task type id {0} (catalog has ids 0..=8)")]
    InvalidTypeId(usize),

    #[error("instance must contain at least one task")]
    EmptyInstance,

    #[error("total processing time is zero; objective is undefined")]
    ZeroProcessingTime,

    #[error("instance has {n} tasks, exceeding the brute-force cap of {max_n}")]
    InstanceTooLarge { n: usize, max_n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset line {line}: {detail}")]
    MalformedSample { line: usize, detail: String },

    #[error("dataset manifest: {0}")]
    BadManifest(String),

    #[error("checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("token {0} is outside the vocabulary")]
    InvalidToken(usize),

    #[error("all task counts are zero; decoding already consumed every task")]
    NothingToDecode,

    #[error("training produced a non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl SchedError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SchedError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        SchedError::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (flags, files, ids) rather
    /// than by a runtime failure. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            SchedError::Io { .. } | SchedError::NonFiniteLoss { .. }
        )
    }
}
