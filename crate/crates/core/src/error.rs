use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while building or evaluating principal graphs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: data has {data} columns, graph embedding has {graph}")]
    DimensionMismatch { data: usize, graph: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset has zero variance")]
    ZeroVariance,

    #[error("grammar precondition failed: {0}")]
    Precondition(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("malformed barcode {0:?}")]
    Barcode(String),

    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("network error: {0}")]
    Network(String),

    #[error("energy mismatch between direct and per-copy evaluation: {direct} vs {per_copy}")]
    EnergyMismatch { direct: f64, per_copy: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
