//! Experiment orchestration for neurodenote: configuration, the staged
//! pipeline, the artifact manifest and report rendering.

pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use manifest::{DirLock, Manifest};
pub use stages::{pipeline, Run, RunMetrics};
