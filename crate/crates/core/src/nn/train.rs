//! Mini-batch training with a seeded validation split and early stopping.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::loss::{LossKind, TargetBatch};
use crate::nn::model::ModelTensor;

/// Rows evaluated per forward call outside of training steps.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Binary(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Binary(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Binary(b) => Targets::Binary(idx.iter().map(|&i| b[i]).collect()),
        }
    }

    fn as_batch(&self) -> TargetBatch<'_> {
        match self {
            Targets::Classes(c) => TargetBatch::Classes(c),
            Targets::Binary(b) => TargetBatch::Binary(b),
        }
    }
}

/// Row-major inputs with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub input_len: usize,
    pub targets: Targets,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, input_len: usize, targets: Targets) -> Result<Self> {
        if input_len == 0 || inputs.len() != input_len * targets.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![targets.len(), input_len],
                actual: vec![inputs.len()],
            });
        }
        Ok(Dataset {
            inputs,
            input_len,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_len..(i + 1) * self.input_len]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(idx.len() * self.input_len);
        for &i in idx {
            inputs.extend_from_slice(self.row(i));
        }
        Dataset {
            inputs,
            input_len: self.input_len,
            targets: self.targets.gather(idx),
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.targets {
            Targets::Classes(_) => LossKind::CategoricalCe,
            Targets::Binary(_) => LossKind::BinaryCe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    /// `None` disables early stopping and keeps the final parameters instead
    /// of the best-validation ones.
    pub early_stopping_patience: Option<usize>,
    pub adam: AdamConfig,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 50,
            validation_fraction: 0.2,
            early_stopping_patience: Some(3),
            adam: AdamConfig::default(),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: ModelTensor,
    pub history: Vec<EpochRecord>,
    /// Number of epochs actually run.
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were kept, 0 if none ran.
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Mean loss of `model` on `data`, computed in chunks.
pub fn mean_loss(model: &ModelTensor, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let kind = data.loss_kind();
    let width = model.output_len();
    let mut total = 0.0;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let chunk = data.subset(&idx);
        let out = model.predict(&chunk.inputs, idx.len())?;
        total += kind.batch_loss(&out, width, idx.len(), chunk.targets.as_batch())? * idx.len() as f64;
        start = end;
    }
    Ok(total / data.len() as f64)
}

/// Model outputs for every row, `len x output_len`.
pub fn predict_dataset(model: &ModelTensor, data: &Dataset) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len() * model.output_len());
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        out.extend(model.predict(&data.inputs[start * data.input_len..end * data.input_len], end - start)?);
        start = end;
    }
    Ok(out)
}

/// Trains `model` on `data`. The loss follows the target kind.
pub fn fit(model: ModelTensor, data: &Dataset, config: &TrainConfig) -> Result<FitOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.len() < config.batch_size.max(2) {
        return Err(Error::DatasetTooSmall {
            len: data.len(),
            batch_size: config.batch_size.max(2),
        });
    }
    if data.input_len != model.input_len() {
        return Err(Error::ShapeMismatch {
            expected: model.input_shape.clone(),
            actual: vec![data.input_len],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64 * config.validation_fraction).round() as usize).clamp(1, data.len() - 1);
    let val_indices = order[..n_val].to_vec();
    let mut train_indices = order[n_val..].to_vec();
    let val = data.subset(&val_indices);

    let kind = data.loss_kind();
    let mut model = model;
    let mut adam = Adam::new(&model, config.adam);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelTensor)> = None;
    let mut wait = 0;

    for epoch in 1..=config.max_epochs {
        train_indices.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in train_indices.chunks(config.batch_size) {
            let batch = data.subset(idx);
            let (l, grads) = model.backward(&batch.inputs, idx.len(), batch.targets.as_batch(), kind)?;
            total += l * idx.len() as f64;
            adam.step(&mut model, &grads);
        }
        let train_loss = total / train_indices.len() as f64;
        let val_loss = mean_loss(&model, &val)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::InvalidModel(format!("training diverged at epoch {epoch}")));
        }
        log::info!("epoch {epoch}: train_loss={train_loss:.6} val_loss={val_loss:.6}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
            wait = 0;
        } else {
            wait += 1;
            if config.early_stopping_patience.is_some_and(|p| wait >= p) {
                break;
            }
        }
    }

    let stopped_epoch = history.len();
    let (model, best_epoch) = match best {
        Some((_, e, m)) if config.early_stopping_patience.is_some() => (m, e),
        _ => (model, stopped_epoch),
    };
    Ok(FitOutcome {
        model,
        history,
        stopped_epoch,
        best_epoch,
        train_indices,
        val_indices,
    })
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::metrics::evaluate;
    use crate::nn::model::{Activation, ModelBuilder};

    fn separable(n: usize) -> Dataset {
        let mut inputs = Vec::new();
        let mut t = Vec::new();
        for i in 0..n {
            let x = ((i * 37) % 101) as f64 / 50.0 - 1.0;
            let y = ((i * 59) % 103) as f64 / 51.0 - 1.0;
            let label = x + 0.5 * y > 0.1;
            // keep a margin so the set is comfortably separable
            let shift = if label { 0.2 } else { -0.2 };
            inputs.extend([x + shift, y + shift]);
            t.push(if label { 1.0 } else { 0.0 });
        }
        Dataset::new(inputs, 2, Targets::Binary(t)).unwrap()
    }

    fn linear() -> ModelTensor {
        ModelBuilder::new(vec![2])
            .dense(1, Activation::Sigmoid)
            .build(4)
            .unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let cfg = TrainConfig {
            max_epochs: 0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let m = linear();
        let out = fit(m.clone(), &separable(40), &cfg).unwrap();
        assert_eq!(out.model, m);
        assert!(out.history.is_empty());
        assert_eq!(out.stopped_epoch, 0);
    }

    #[test]
    fn too_small_dataset_errors() {
        let r = fit(linear(), &separable(10), &TrainConfig::default());
        assert!(matches!(
            r,
            Err(Error::DatasetTooSmall {
                len: 10,
                batch_size: 128
            })
        ));
    }

    #[test]
    fn separable_set_reaches_full_accuracy() {
        let data = separable(200);
        let cfg = TrainConfig {
            batch_size: 16,
            max_epochs: 200,
            early_stopping_patience: None,
            adam: AdamConfig {
                alpha: 0.05,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let out = fit(linear(), &data, &cfg).unwrap();
        let m = evaluate(&out.model, &data.subset(&out.train_indices)).unwrap();
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let data = separable(120);
        let cfg = TrainConfig {
            batch_size: 16,
            max_epochs: 5,
            rng_seed: 11,
            ..TrainConfig::default()
        };
        let a = fit(linear(), &data, &cfg).unwrap();
        let b = fit(linear(), &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn without_early_stopping_final_parameters_are_kept() {
        let data = separable(120);
        let short = TrainConfig {
            batch_size: 16,
            max_epochs: 7,
            early_stopping_patience: None,
            rng_seed: 3,
            ..TrainConfig::default()
        };
        let a = fit(linear(), &data, &short).unwrap();
        assert_eq!(a.best_epoch, 7);
        let restoring = TrainConfig {
            early_stopping_patience: Some(100),
            ..short.clone()
        };
        let b = fit(linear(), &data, &restoring).unwrap();
        let best = b
            .history
            .iter()
            .min_by(|x, y| x.val_loss.total_cmp(&y.val_loss))
            .unwrap()
            .epoch;
        assert_eq!(b.best_epoch, best);
        if best == 7 {
            assert_eq!(a.model, b.model);
        }
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        write_history_csv(
            &[EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,val_loss\n1,0.5,0.25\n"
        );
    }
}
