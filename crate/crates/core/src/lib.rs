//! Probing a chess move predictor for neurons that denote board properties.
//!
//! The crate covers the whole chain: chess rules and game records, a small
//! neural network engine, the object model whose hidden activations are
//! recorded, observer models trained on those recordings, silhouette-based
//! denotation tests and the firing-proportion analysis.

pub mod analysis;
pub mod chess;
pub mod denotation;
pub mod error;
pub mod nn;
pub mod object;
pub mod observer;

pub use analysis::{HeatMap, ProportionReport};
pub use chess::{Board, BoardTensor, LabelConfig, PositionRecord, PropertyKind};
pub use denotation::{DenotationResult, Family, Measure, Silhouette};
pub use error::{Error, Result};
pub use nn::{ActivationSnapshot, Metrics, ModelTensor, Tensor, TrainConfig};
pub use object::{ObjectSpec, Position, SnapshotDataset};
pub use observer::{ObserverKind, ObserverReport};
