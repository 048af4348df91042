//! Experiment configuration, read from JSON.
//!
//! Every field except `seeds` has a desk-scale default, so a minimal file
//! only needs an input and the seeds:
//!
//! ```json
//! {
//!   "inputs": { "pgn": ["games/"] },
//!   "output_dir": "runs/desk",
//!   "seeds": { "split": 1, "object_init": 2, "annihilation": 3 }
//! }
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use neurodenote::chess::synth::SynthConfig;
use neurodenote::chess::LabelConfig;
use neurodenote::denotation::{Family, Measure};
use neurodenote::nn::TrainConfig;
use neurodenote::{ObjectSpec, ObserverKind, PropertyKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "NEURODENOTE_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// PGN files or directories scanned for `*.pgn`.
    pub pgn: Vec<PathBuf>,
    /// Files with one FEN per line.
    pub fen: Vec<PathBuf>,
    /// A prebuilt position cache, used instead of parsing.
    pub cache: Option<PathBuf>,
    /// Self-play games generated in memory.
    pub synth: Option<SynthConfig>,
}

impl Inputs {
    pub fn is_empty(&self) -> bool {
        self.pgn.is_empty() && self.fen.is_empty() && self.cache.is_none() && self.synth.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_games: Option<usize>,
    pub max_positions: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_games: Some(5_000),
            max_positions: Some(200_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Game-level train/test split of the object corpus.
    pub split: u64,
    /// Object model initialization.
    pub object_init: u64,
    /// Base seed of the annihilation control repetitions.
    pub annihilation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectStage {
    pub spec: ObjectSpec,
    pub test_fraction: f64,
    pub train: TrainConfig,
}

impl Default for ObjectStage {
    fn default() -> Self {
        ObjectStage {
            spec: ObjectSpec::default(),
            test_fraction: 0.3,
            train: TrainConfig {
                rng_seed: 11,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverStage {
    pub kinds: Vec<ObserverKind>,
    pub properties: Vec<PropertyKind>,
    pub train: TrainConfig,
    /// Epoch cap for conv observers, which cost far more per epoch.
    pub conv_max_epochs: Option<usize>,
    /// Boards taken from the object test set, in order, for observer data.
    pub pool_cap: Option<usize>,
    /// Trailing share of the pool held out as the observer test set.
    pub test_tail_fraction: f64,
}

impl Default for ObserverStage {
    fn default() -> Self {
        ObserverStage {
            kinds: ObserverKind::ALL.to_vec(),
            properties: PropertyKind::ALL.to_vec(),
            train: TrainConfig {
                rng_seed: 21,
                ..TrainConfig::default()
            },
            conv_max_epochs: Some(12),
            pool_cap: Some(6_000),
            test_tail_fraction: 0.25,
        }
    }
}

impl ObserverStage {
    pub fn train_config(&self, kind: ObserverKind) -> TrainConfig {
        let mut cfg = self.train.clone();
        if kind == ObserverKind::Conv {
            if let Some(cap) = self.conv_max_epochs {
                cfg.max_epochs = cfg.max_epochs.min(cap);
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SilhouetteSpec {
    pub property: PropertyKind,
    /// `L<layer>N<neuron>` terms joined by `+`, or `full`.
    pub silhouette: String,
    pub family: Family,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenotationStage {
    /// Size of the top-|weight| silhouette drawn from each heat map.
    pub top_k: usize,
    pub threshold: f64,
    pub measure: Measure,
    pub silhouettes: Vec<SilhouetteSpec>,
}

impl Default for DenotationStage {
    fn default() -> Self {
        DenotationStage {
            top_k: 2,
            threshold: 0.86,
            measure: Measure::F1,
            silhouettes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisStage {
    pub annihilation_repetitions: usize,
}

impl Default for AnalysisStage {
    fn default() -> Self {
        AnalysisStage {
            annihilation_repetitions: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub labels: LabelConfig,
    #[serde(default)]
    pub limits: Limits,
    pub seeds: Seeds,
    #[serde(default)]
    pub object: ObjectStage,
    #[serde(default)]
    pub observer: ObserverStage,
    #[serde(default)]
    pub denotation: DenotationStage,
    #[serde(default)]
    pub analysis: AnalysisStage,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("neurodenote-out")
}

impl ExperimentConfig {
    /// The desk-scale experiment on a synthetic corpus.
    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            inputs: Inputs {
                synth: Some(SynthConfig {
                    games: 2_100,
                    seed: 7,
                    max_plies: 200,
                    temperature: 0.3,
                }),
                ..Inputs::default()
            },
            output_dir: output_dir.into(),
            labels: LabelConfig::default(),
            limits: Limits::default(),
            seeds: Seeds {
                split: 1,
                object_init: 2,
                annihilation: 3,
            },
            object: ObjectStage::default(),
            observer: ObserverStage::default(),
            denotation: DenotationStage::default(),
            analysis: AnalysisStage::default(),
        }
    }

    /// Reads a config, resolves relative paths against its directory and
    /// applies the output-directory override.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.resolve_paths(&base);
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inputs.pgn.iter_mut().for_each(fix);
        self.inputs.fen.iter_mut().for_each(fix);
        if let Some(c) = self.inputs.cache.as_mut() {
            fix(c);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> CliResult<()> {
        let missing: Vec<String> = self
            .inputs
            .pgn
            .iter()
            .chain(&self.inputs.fen)
            .chain(&self.inputs.cache)
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Usage(format!(
                "input paths not found: {}",
                missing.join(", ")
            )));
        }
        let bad = |m: String| Err(CliError::Usage(m));
        if !(self.object.test_fraction > 0.0 && self.object.test_fraction < 1.0) {
            return bad(format!(
                "object.test_fraction must lie in (0, 1), got {}",
                self.object.test_fraction
            ));
        }
        let tail = self.observer.test_tail_fraction;
        if !(tail > 0.0 && tail < 1.0) {
            return bad(format!("observer.test_tail_fraction must lie in (0, 1), got {tail}"));
        }
        if self.observer.kinds.is_empty() || self.observer.properties.is_empty() {
            return bad("observer.kinds and observer.properties must be nonempty".into());
        }
        if self.denotation.top_k == 0 {
            return bad("denotation.top_k must be at least 1".into());
        }
        self.object.train.validate()?;
        self.observer.train.validate()?;
        for s in &self.denotation.silhouettes {
            if s.silhouette != "full" {
                s.silhouette.parse::<neurodenote::Silhouette>()?;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding, output directory excluded.
    pub fn hash(&self) -> String {
        let mut key = self.clone();
        key.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("config serializes")))
    }
}
