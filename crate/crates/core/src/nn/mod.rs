//! A small dense/convolutional network engine with activation recording.

pub mod adam;
pub mod checkpoint;
pub(crate) mod linalg;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use adam::{adam_update, Adam, AdamConfig, AdamState};
pub use checkpoint::{model_hash, Checkpoint};
pub use loss::{loss, LossKind, TargetBatch, EPS_CLIP};
pub use metrics::{argmax, evaluate, Confusion, Metrics, DECISION_THRESHOLD};
pub use model::{
    Activation, ActivationSnapshot, Conv2d, Dense, Gradients, Layer, LayerGrad, ModelBuilder, ModelTensor, Padding,
};
pub use tensor::Tensor;
pub use train::{
    fit, mean_loss, predict_dataset, write_history_csv, Dataset, EpochRecord, FitOutcome, Targets, TrainConfig,
};
