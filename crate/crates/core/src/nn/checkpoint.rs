//! Self-describing JSON model checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::model::ModelTensor;

pub const CHECKPOINT_FORMAT: &str = "neurodenote-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelTensor,
    /// Free-form descriptive fields (task, seed, metrics).
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(model: ModelTensor) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model,
            metadata: Default::default(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        for t in ck.model.params() {
            if t.len() != t.shape().iter().product::<usize>() {
                return Err(Error::Format("parameter length does not match its shape".into()));
            }
        }
        ck.model.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Hex SHA-256 of the model's canonical JSON encoding.
pub fn model_hash(model: &ModelTensor) -> String {
    let bytes = serde_json::to_vec(model).expect("model serializes");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Activation, ModelBuilder};

    #[test]
    fn round_trip_is_exact() {
        let m = ModelBuilder::new(vec![3, 4, 1])
            .conv2d(2, [3, 3], Activation::Relu)
            .record()
            .dense(3, Activation::Softmax)
            .build(2)
            .unwrap();
        let text = Checkpoint::new(m.clone()).to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(model_hash(&back.model), model_hash(&m));
    }

    #[test]
    fn rejects_foreign_format() {
        let m = ModelBuilder::new(vec![2])
            .dense(1, Activation::Sigmoid)
            .build(0)
            .unwrap();
        let mut ck = Checkpoint::new(m);
        ck.version = 99;
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());
    }
}
