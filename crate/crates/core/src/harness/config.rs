use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::EpisodeConfig;
use super::suite::SuiteConfig;
use super::train::TrainHyper;
use crate::datakit::RecordRecipe;
use crate::error::{Error, Result};
use crate::models::Scale;
use crate::pilots::{CommandLimits, ExpertConfig};

/// Everything a pipeline run needs, loadable from one TOML document. Missing tables
/// take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub scale: Scale,
    pub limits: CommandLimits,
    pub expert: ExpertConfig,
    pub record: RecordRecipe,
    pub train: TrainHyper,
    pub episode: EpisodeConfig,
    pub suite: SuiteConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
