//! Run configuration file.
//!
//! A TOML file with a few top-level keys and one table per stage:
//!
//! ```toml
//! seed = 7
//! store = "store"
//! cache = "vectors.cache"
//! out = "results"
//!
//! [synth]
//! participants = 12
//!
//! [prepare.window]
//! timesteps = 500
//!
//! [experiments.sweep]
//! hidden_sizes = [10, 20, 30]
//! ```
//!
//! Every key is optional. Command-line flags override the file, and the
//! effective configuration is written next to a command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{ExperimentConfig, ExperimentId};
use crate::pipeline::PrepareConfig;
use crate::synth::StoreConfig;

pub const ARCHIVE_NAME: &str = "run_config.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("cannot serialize config: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub store: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub experiment: Option<ExperimentId>,
    pub synth: StoreConfig,
    pub prepare: PrepareConfig,
    pub experiments: ExperimentConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }
}
