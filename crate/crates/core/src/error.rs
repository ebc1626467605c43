use std::path::PathBuf;

use thiserror::Error;

use crate::arena::AgentId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("could not spawn a valid episode after {attempts} attempts ({reason})")]
    SpawnFailed { attempts: u32, reason: String },

    #[error("action for unknown agent {0}")]
    UnknownAgent(AgentId),

    #[error("missing action for live agent {0}")]
    MissingAction(AgentId),

    #[error("duplicate action for agent {0}")]
    DuplicateAction(AgentId),

    #[error("non-finite action axis for agent {0}")]
    NonFiniteAction(AgentId),

    #[error("agent {0} has no designated target")]
    MissingTarget(AgentId),

    #[error("agent {0} is not alive")]
    AgentDead(AgentId),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("observation width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("empty observation history")]
    EmptyHistory,

    #[error("corrupt parameter file: {0}")]
    CorruptFile(String),

    #[error("network spec mismatch: file has {found:016x}, expected {expected:016x}")]
    SpecMismatch { expected: u64, found: u64 },

    #[error("non-finite loss at epoch {epoch}, minibatch {minibatch}: {detail}")]
    NonFiniteLoss { epoch: usize, minibatch: usize, detail: String },

    #[error("evaluation requested with zero episodes")]
    EmptyReport,

    #[error("trace verification failed: {0}")]
    TraceMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
