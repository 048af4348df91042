//! Observer models trained on activation snapshots.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chess::PropertyKind;
use crate::error::{Error, Result};
use crate::nn::{
    evaluate, fit, Activation, Confusion, Metrics, ModelBuilder, ModelTensor, TrainConfig, DECISION_THRESHOLD,
};
use crate::object::SnapshotDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverKind {
    Linear,
    Mlp,
    Conv,
}

impl ObserverKind {
    pub const ALL: [ObserverKind; 3] = [ObserverKind::Linear, ObserverKind::Mlp, ObserverKind::Conv];

    pub fn name(self) -> &'static str {
        match self {
            ObserverKind::Linear => "linear",
            ObserverKind::Mlp => "mlp",
            ObserverKind::Conv => "conv",
        }
    }
}

impl fmt::Display for ObserverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObserverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObserverKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown observer kind {s:?}")))
    }
}

pub const MLP_WIDTH: usize = 256;
pub const CONV_CHANNELS: usize = 32;

/// Observer over `features` inputs. `Conv` reads them as a
/// `layers x width x 1` image and needs `geometry = Some(&[width; layers])`.
pub fn build_observer_for(
    kind: ObserverKind,
    features: usize,
    geometry: Option<&[usize]>,
    seed: u64,
) -> Result<ModelTensor> {
    match kind {
        ObserverKind::Linear => ModelBuilder::new(vec![features])
            .dense(1, Activation::Sigmoid)
            .build(seed),
        ObserverKind::Mlp => ModelBuilder::new(vec![features])
            .dense(MLP_WIDTH, Activation::Relu)
            .dense(MLP_WIDTH, Activation::Relu)
            .dense(MLP_WIDTH, Activation::Relu)
            .dense(1, Activation::Sigmoid)
            .build(seed),
        ObserverKind::Conv => {
            let widths = geometry
                .ok_or_else(|| Error::Unsupported("conv observer needs the full activation geometry".into()))?;
            let w = widths.first().copied().unwrap_or(0);
            if w == 0 || widths.iter().any(|&x| x != w) || widths.len() * w != features {
                return Err(Error::Unsupported(format!(
                    "conv observer needs equal-width layers, got {widths:?}"
                )));
            }
            ModelBuilder::new(vec![widths.len(), w, 1])
                .conv2d(CONV_CHANNELS, [3, 3], Activation::Relu)
                .conv2d(CONV_CHANNELS, [3, 3], Activation::Relu)
                .conv2d(CONV_CHANNELS, [3, 3], Activation::Relu)
                .dense(MLP_WIDTH, Activation::Relu)
                .dense(MLP_WIDTH, Activation::Relu)
                .dense(1, Activation::Sigmoid)
                .build(seed)
        }
    }
}

/// Observer over the object model's default 3 x 128 geometry.
pub fn build_observer(kind: ObserverKind, seed: u64) -> Result<ModelTensor> {
    build_observer_for(kind, 384, Some(&[128, 128, 128]), seed)
}

/// Observer sized for a (possibly restricted) snapshot dataset.
pub fn build_observer_for_dataset(kind: ObserverKind, data: &SnapshotDataset, seed: u64) -> Result<ModelTensor> {
    let geometry = data.is_full_geometry().then_some(data.widths.as_slice());
    build_observer_for(kind, data.feature_len(), geometry, seed)
}

/// Mean of the binary labels.
pub fn label_proportion(labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Always predicts the training set's majority label.
    pub majority: SplitMetrics,
    pub all_positive: SplitMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverReport {
    pub kind: ObserverKind,
    pub property: PropertyKind,
    pub features: usize,
    pub train: Metrics,
    pub test: Metrics,
    pub baselines: Baselines,
    pub train_label_proportion: f64,
    pub test_label_proportion: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub decision_threshold: f64,
    pub config_hash: String,
    pub checkpoint_hash: String,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn constant_metrics(predict: bool, labels: &[bool]) -> Metrics {
    Metrics::from_confusion(Confusion::from_predictions(&vec![predict; labels.len()], labels))
}

/// Hex SHA-256 over everything that determines an observer run.
pub fn observer_config_hash(kind: ObserverKind, data: &SnapshotDataset, config: &TrainConfig) -> String {
    let key = serde_json::json!({
        "kind": kind,
        "property": data.property,
        "columns": data.columns,
        "widths": data.widths,
        "checkpoint": data.checkpoint_hash,
        "train": config,
    });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

/// Fits an observer on `train` (its own validation split is drawn inside)
/// and evaluates it on `test`, alongside the two constant baselines.
pub fn train_observer(
    kind: ObserverKind,
    train: &SnapshotDataset,
    test: &SnapshotDataset,
    config: &TrainConfig,
) -> Result<(ModelTensor, ObserverReport)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.columns != test.columns || train.property != test.property {
        return Err(Error::InvalidConfig(
            "train and test snapshots differ in geometry or property".into(),
        ));
    }
    let model = build_observer_for_dataset(kind, train, config.rng_seed ^ 0x5eed_0b5e)?;
    let train_ds = train.to_dataset()?;
    let test_ds = test.to_dataset()?;
    let outcome = fit(model, &train_ds, config)?;

    let p_train = label_proportion(&train.labels)?;
    let majority = p_train > 0.5;
    let mut warnings = Vec::new();
    if p_train == 0.0 || p_train == 1.0 {
        warnings.push(format!(
            "constant training labels (proportion {p_train}); observer output is degenerate"
        ));
    }
    let report = ObserverReport {
        kind,
        property: train.property,
        features: train.feature_len(),
        train: evaluate(&outcome.model, &train_ds)?,
        test: evaluate(&outcome.model, &test_ds)?,
        baselines: Baselines {
            majority: SplitMetrics {
                train: constant_metrics(majority, &train.labels),
                test: constant_metrics(majority, &test.labels),
            },
            all_positive: SplitMetrics {
                train: constant_metrics(true, &train.labels),
                test: constant_metrics(true, &test.labels),
            },
        },
        train_label_proportion: p_train,
        test_label_proportion: label_proportion(&test.labels)?,
        train_size: train.len(),
        test_size: test.len(),
        stopped_epoch: outcome.stopped_epoch,
        best_epoch: outcome.best_epoch,
        decision_threshold: DECISION_THRESHOLD,
        config_hash: observer_config_hash(kind, train, config),
        checkpoint_hash: train.checkpoint_hash.clone(),
        seed: config.rng_seed,
        warnings,
    };
    for w in &report.warnings {
        log::warn!("{kind}/{}: {w}", train.property);
    }
    Ok((outcome.model, report))
}

/// One row per report: model, property, accuracies, F1 scores and baselines.
pub fn write_results_csv<W: Write>(reports: &[ObserverReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "property",
        "train_accuracy",
        "test_accuracy",
        "train_f1",
        "test_f1",
        "test_label_proportion",
        "majority_test_accuracy",
        "all_positive_test_f1",
    ])?;
    let f = |m: &Metrics| m.f1.unwrap_or(0.0).to_string();
    for r in reports {
        w.write_record([
            r.kind.to_string(),
            r.property.to_string(),
            r.train.accuracy.to_string(),
            r.test.accuracy.to_string(),
            f(&r.train),
            f(&r.test),
            r.test_label_proportion.to_string(),
            r.baselines.majority.test.accuracy.to_string(),
            f(&r.baselines.all_positive.test),
        ])?;
    }
    w.flush()?;
    Ok(())
}
