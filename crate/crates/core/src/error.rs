use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum GadError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown node id `{id}` referenced in {path}")]
    UnknownNode { id: String, path: PathBuf },

    #[error("inconsistent feature dimension at node `{id}`: expected {expected}, found {found}")]
    FeatureDimension {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("node id {id} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },

    #[error("infeasible balance: {k} parts x cap {cap} < total weight {total}")]
    InfeasibleBalance { k: usize, cap: u64, total: u64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GadError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GadError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, GadError>;
