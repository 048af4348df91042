use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::ModelTensor;
use crate::nn::train::{predict_dataset, Dataset, Targets};

/// Sigmoid outputs strictly above this are positive predictions.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2tp / (2tp + fp + fn)`, zero when the denominator is zero.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Binary tasks only.
    pub f1: Option<f64>,
    pub confusion: Option<Confusion>,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        Metrics {
            accuracy: c.accuracy(),
            f1: Some(c.f1()),
            confusion: Some(c),
        }
    }
}

/// Accuracy (top-1 for categorical targets) and, for binary targets, F1 and
/// the confusion counts at [`DECISION_THRESHOLD`].
pub fn evaluate(model: &ModelTensor, data: &Dataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out = predict_dataset(model, data)?;
    match &data.targets {
        Targets::Binary(t) => {
            let predicted: Vec<bool> = out.iter().map(|&p| p > DECISION_THRESHOLD).collect();
            let truth: Vec<bool> = t.iter().map(|&v| v >= 0.5).collect();
            Ok(Metrics::from_confusion(Confusion::from_predictions(&predicted, &truth)))
        }
        Targets::Classes(c) => {
            let width = model.output_len();
            let correct = c
                .iter()
                .enumerate()
                .filter(|&(b, &k)| argmax(&out[b * width..(b + 1) * width]) == k)
                .count();
            Ok(Metrics {
                accuracy: correct as f64 / c.len() as f64,
                f1: None,
                confusion: None,
            })
        }
    }
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
