use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::Activation;
use crate::nn::tensor::Tensor;

/// Probabilities are clamped to `[EPS_CLIP, 1 - EPS_CLIP]` before logarithms.
pub const EPS_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CategoricalCe,
    BinaryCe,
}

/// Targets for a batch: class indices for categorical losses, values in
/// `[0, 1]` for binary ones.
#[derive(Debug, Clone, Copy)]
pub enum TargetBatch<'a> {
    Classes(&'a [usize]),
    Binary(&'a [f64]),
}

impl TargetBatch<'_> {
    pub fn len(&self) -> usize {
        match self {
            TargetBatch::Classes(c) => c.len(),
            TargetBatch::Binary(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(EPS_CLIP, 1.0 - EPS_CLIP)
}

pub(crate) fn binary_ce(p: f64, t: f64) -> f64 {
    let p = clip(p);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// Loss of a single prediction against a single target (one-hot for the
/// categorical case).
pub fn loss(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<f64> {
    if prediction.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: prediction.shape().to_vec(),
            actual: target.shape().to_vec(),
        });
    }
    match kind {
        LossKind::CategoricalCe => Ok(prediction
            .values()
            .iter()
            .zip(target.values())
            .map(|(&p, &t)| if t == 0.0 { 0.0 } else { -t * clip(p).ln() })
            .sum()),
        LossKind::BinaryCe => {
            if prediction.len() != 1 {
                return Err(Error::ShapeMismatch {
                    expected: vec![1],
                    actual: prediction.shape().to_vec(),
                });
            }
            Ok(binary_ce(prediction.values()[0], target.values()[0]))
        }
    }
}

impl LossKind {
    fn check(self, width: usize, batch: usize, targets: TargetBatch<'_>) -> Result<()> {
        let ok = match (self, targets) {
            (LossKind::CategoricalCe, TargetBatch::Classes(c)) => c.iter().all(|&k| k < width),
            (LossKind::BinaryCe, TargetBatch::Binary(_)) => width == 1,
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "{self:?} does not fit targets for output width {width}"
            )));
        }
        if targets.len() != batch {
            return Err(Error::ShapeMismatch {
                expected: vec![batch],
                actual: vec![targets.len()],
            });
        }
        Ok(())
    }

    /// Mean loss over a batch of output rows.
    pub fn batch_loss(self, output: &[f64], width: usize, batch: usize, targets: TargetBatch<'_>) -> Result<f64> {
        self.check(width, batch, targets)?;
        let total: f64 = match targets {
            TargetBatch::Classes(c) => c
                .iter()
                .enumerate()
                .map(|(b, &k)| -clip(output[b * width + k]).ln())
                .sum(),
            TargetBatch::Binary(t) => output.iter().zip(t).map(|(&p, &t)| binary_ce(p, t)).sum(),
        };
        Ok(total / batch as f64)
    }

    /// Gradient of the mean loss with respect to the output layer's
    /// pre-activation, for the matching output activation.
    pub fn output_delta(
        self,
        activation: Activation,
        output: &[f64],
        width: usize,
        batch: usize,
        targets: TargetBatch<'_>,
    ) -> Result<Vec<f64>> {
        self.check(width, batch, targets)?;
        let expected = match self {
            LossKind::CategoricalCe => Activation::Softmax,
            LossKind::BinaryCe => Activation::Sigmoid,
        };
        if activation != expected {
            return Err(Error::InvalidModel(format!(
                "{self:?} requires a {expected:?} output layer"
            )));
        }
        let scale = 1.0 / batch as f64;
        let mut delta: Vec<f64> = output.iter().map(|&p| p * scale).collect();
        match targets {
            TargetBatch::Classes(c) => {
                for (b, &k) in c.iter().enumerate() {
                    delta[b * width + k] -= scale;
                }
            }
            TargetBatch::Binary(t) => {
                for (d, &t) in delta.iter_mut().zip(t) {
                    *d -= t * scale;
                }
            }
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_near_zero() {
        let mut p = vec![0.0; 64];
        p[5] = 1.0;
        let t = Tensor::from_vec(p.clone());
        let l = loss(LossKind::CategoricalCe, &Tensor::from_vec(p), &t).unwrap();
        assert!((0.0..=1.2e-7).contains(&l));
    }

    #[test]
    fn uniform_prediction_is_ln_64() {
        let p = Tensor::from_vec(vec![1.0 / 64.0; 64]);
        let mut t = vec![0.0; 64];
        t[17] = 1.0;
        let l = loss(LossKind::CategoricalCe, &p, &Tensor::from_vec(t)).unwrap();
        assert!((l - 64f64.ln()).abs() < 1e-12);
        assert!((l - 4.1589).abs() < 1e-4);
    }

    #[test]
    fn binary_value() {
        let l = loss(
            LossKind::BinaryCe,
            &Tensor::from_vec(vec![0.8]),
            &Tensor::from_vec(vec![1.0]),
        )
        .unwrap();
        assert!((l - 0.22314).abs() < 1e-5);
    }

    #[test]
    fn mismatched_lengths() {
        let r = loss(
            LossKind::CategoricalCe,
            &Tensor::from_vec(vec![0.5; 3]),
            &Tensor::from_vec(vec![0.5; 2]),
        );
        assert!(matches!(r, Err(Error::ShapeMismatch { .. })));
    }
}
