use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("agent index {0} out of range (3 agents)")]
    AgentIndex(usize),

    #[error("episode already finished at timestep {0}")]
    EpisodeFinished(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("replay buffer holds {size} transitions, batch needs {needed}")]
    InsufficientBuffer { size: usize, needed: usize },

    #[error("ensemble member selection requested under the {0} scheme")]
    NotEnsemble(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("record format version {found} not supported (expected {expected})")]
    RecordVersion { found: u32, expected: u32 },

    #[error("record file truncated: expected {expected} bytes of payload, found {found}")]
    RecordTruncated { expected: u64, found: u64 },

    #[error("record header mismatch: {0}")]
    RecordDimension(String),

    #[error("corrupt data in {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("partial output detected in {0} (rerun with --force to overwrite)")]
    PartialOutput(PathBuf),

    #[error("{path} was produced by manifest {found}, current manifest is {expected} (rerun with --force to overwrite)")]
    StaleOutput {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
