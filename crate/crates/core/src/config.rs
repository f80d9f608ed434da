//! Experiment configuration shared by the command line and the sweep runner.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, ModelKind};
use crate::graph::SbmConfig;
use crate::training::TrainConfig;

/// Input graph: files on disk, or a synthetic SBM when `path` is unset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Directory holding the edge, feature and annotation files.
    pub path: Option<PathBuf>,
    pub synthetic: SbmConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Pvgae,
            dim: 32,
            hidden: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub beta: f64,
    pub epochs: usize,
    pub sensitive_epochs: usize,
    pub lr_sensitive: f64,
    pub lr_graph: f64,
    pub observed_ratio: f64,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            beta: t.beta,
            epochs: t.epochs,
            sensitive_epochs: t.sensitive_epochs,
            lr_sensitive: t.lr_sensitive,
            lr_graph: t.lr_graph,
            observed_ratio: t.observed_ratio,
            log_every: t.log_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Parent directory of per-run output directories.
    pub output: PathBuf,
    /// Sweep worker threads; defaults to the available cores.
    pub workers: Option<usize>,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("runs"),
            workers: None,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// The parts of a configuration that determine results.
#[derive(Serialize)]
struct Identity<'a> {
    dataset: &'a DatasetConfig,
    model: &'a ModelConfig,
    train: &'a TrainSection,
    eval: &'a EvalConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dataset.path.is_none() {
            self.dataset.synthetic.validate()?;
        }
        self.train_config().validate()?;
        self.eval.validate()?;
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            beta: t.beta,
            epochs: t.epochs,
            sensitive_epochs: t.sensitive_epochs,
            lr_sensitive: t.lr_sensitive,
            lr_graph: t.lr_graph,
            latent_dim: self.model.dim,
            hidden_dim: self.model.hidden,
            seed: self.seed,
            observed_ratio: t.observed_ratio,
            log_every: t.log_every,
        }
    }

    /// Short SHA-256 digest of the result-determining sections. The seed,
    /// output location and worker count are excluded.
    pub fn config_hash(&self) -> String {
        let identity = Identity {
            dataset: &self.dataset,
            model: &self.model,
            train: &self.train,
            eval: &self.eval,
        };
        let json = serde_json::to_vec(&identity).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..6])
    }

    /// `<output>/<hash>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output.join(format!("{}-s{}", self.config_hash(), self.seed))
    }

    pub fn resolved_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Resolves a relative dataset path against the directory of the
    /// config file it was read from.
    pub fn anchor_paths(&mut self, config_dir: &Path) {
        if let Some(p) = &self.dataset.path {
            if p.is_relative() {
                self.dataset.path = Some(config_dir.join(p));
            }
        }
    }
}
