//! Run configuration. Every field has a default; a JSON file may override
//! any subset, and command-line flags override both.

use std::path::{Path, PathBuf};

use pdgvd::corpus::SplitSpec;
use pdgvd::explainer::ExplainerConfig;
use pdgvd::model::{ModelConfig, TrainConfig};
use pdgvd::patterns::SizeMeasure;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineConfig {
    pub min_support: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub measure: SizeMeasure,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            min_support: 2,
            min_size: 2,
            max_size: 5,
            measure: SizeMeasure::Edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the split, parameter initialisation and batch order; it
    /// replaces the seeds inside `train` and `split`.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub explainer: ExplainerConfig,
    pub split: SplitSpec,
    pub mine: MineConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            explainer: ExplainerConfig::default(),
            split: SplitSpec::default(),
            mine: MineConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {}", e.path(), e.inner()))
    }

    /// Defaults, overridden by `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Self::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { seed: self.seed, ..self.split }
    }
}
