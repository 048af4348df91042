use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid board: {0}")]
    InvalidBoard(String),

    #[error("invalid FEN `{fen}`: {reason}")]
    InvalidFen { fen: String, reason: String },

    #[error("board must be normalized to white-to-move before encoding")]
    NotNormalized,

    #[error("illegal or unparseable move `{san}` in position {fen}")]
    IllegalMove { san: String, fen: String },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset has {len} rows, fewer than one batch of {batch_size}")]
    DatasetTooSmall { len: usize, batch_size: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("silhouette position (layer {layer}, neuron {neuron}) outside {layers}x{width} geometry")]
    PositionOutOfRange {
        layer: usize,
        neuron: usize,
        layers: usize,
        width: usize,
    },

    #[error("invalid silhouette: {0}")]
    InvalidSilhouette(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("annihilation target {target} is below the current annihilated fraction {current}")]
    TargetBelowCurrent { target: f64, current: f64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
