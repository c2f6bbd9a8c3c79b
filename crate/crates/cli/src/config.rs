//! `train.toml`: model, training and cross-validation settings.
//!
//! Resolution order is command-line flags, then the file, then defaults.

use std::path::Path;

use fontpair::netmodel::ModelConfig;
use fontpair::trainer::{CvOptions, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cv: CvOptions,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config { path: path.to_path_buf(), reason: e.to_string() })?;
        let config: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config { path: path.to_path_buf(), reason: e.message().to_string() })?;
        config.model.validate()?;
        config.train.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

/// Training flags that override the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainOverrides {
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Redraw training negatives every epoch.
    #[arg(long)]
    pub resample_negatives: bool,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig, seed: Option<u64>) {
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.patience {
            cfg.early_stop_patience = v;
        }
        if self.resample_negatives {
            cfg.resample_negatives = true;
        }
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
    }
}
