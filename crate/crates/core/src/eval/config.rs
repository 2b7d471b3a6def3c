use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::EmbedConfig;
use crate::error::{ensure, Error, Result};
use crate::preprocess::PreprocessConfig;
use crate::sel::SelConfig;
use crate::siggen::GenerateConfig;
use crate::train::{ModelConfig, TrainConfig, Variant};

use super::SplitConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset files or directories. When empty, records are synthesised
    /// from the `[generate]` section with the run seed.
    pub paths: Vec<PathBuf>,
    /// The inputs are already preprocessed.
    pub preprocessed: bool,
}

/// Everything one experiment needs, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of seeded runs; seeds are `seed, seed + 1, ...`.
    pub seeds: usize,
    pub variant: Variant,
    pub data: DataConfig,
    pub generate: GenerateConfig,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub embed: EmbedConfig,
    pub sel: SelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 3,
            variant: Variant::Full,
            data: DataConfig::default(),
            generate: GenerateConfig::default(),
            preprocess: PreprocessConfig::default(),
            split: SplitConfig::default(),
            embed: EmbedConfig::default(),
            sel: SelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.seeds > 0, Error::Config("seeds must be at least 1".into()));
        ensure!(
            self.embed.input_length == self.preprocess.target_length,
            Error::Config(format!(
                "embed.input_length {} differs from preprocess.target_length {}",
                self.embed.input_length, self.preprocess.target_length
            ))
        );
        self.generate.validate()?;
        self.preprocess.validate()?;
        self.split.validate()?;
        self.embed.validate()?;
        self.sel.validate()?;
        self.train.validate()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            embed: self.embed.clone(),
            sel: self.sel.clone(),
            train: self.train.clone(),
        }
    }
}
