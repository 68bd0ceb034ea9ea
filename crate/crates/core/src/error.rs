use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("label `{label}` (row {row}) is not declared in the label schema")]
    UnknownLabel { label: String, row: usize },

    #[error("invalid record at row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },

    #[error("invalid label schema: {0}")]
    InvalidSchema(String),

    #[error("not enough {class} examples: need {needed}, have {available}")]
    InsufficientExamples {
        class: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("requested {requested} clients but at most {max} can be built")]
    TooManyClients { requested: usize, max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("client {client_id} failed: {source}")]
    Client {
        client_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("update norm {norm} exceeds clip norm {clip}")]
    Unclipped { norm: f64, clip: f64 },

    #[error("target epsilon {target} unreachable: epsilon at z_max={z_max} is {epsilon_at_max}")]
    Unreachable {
        target: f64,
        z_max: f64,
        epsilon_at_max: f64,
    },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("process {0} not found")]
    NoSuchProcess(u32),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
