use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierKind;
use crate::error::{McmaError, Result};
use crate::pipeline::{Mode, PipelineConfig};

pub const SEED_ENV: &str = "MCMA_SEED";

/// Settings that can come from a TOML file; command-line flags take precedence.
///
/// ```toml
/// mode = "mcma"
/// classifier = "gbt"
/// seed = 7
///
/// [pipeline]
/// latent_dim = 1
/// screen_threshold = 0.95
/// force = true
///
/// [pipeline.train]
/// gbt_rounds = 50
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub classifier: ClassifierKind,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub jobs: Option<usize>,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Mcma,
            classifier: ClassifierKind::MnLogit,
            seed: None,
            reps: None,
            jobs: None,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| McmaError::InvalidArgument(format!("config file: {e}")))
    }

    /// Flag, then config file, then the environment, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                McmaError::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            Err(_) => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_overrides() {
        let cfg = RunConfig::from_toml(
            "classifier = \"gbt\"\nseed = 7\n[pipeline]\nforce = true\n[pipeline.train]\ngbt_rounds = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.classifier, ClassifierKind::Gbt);
        assert!(cfg.pipeline.force);
        assert_eq!(cfg.pipeline.train.gbt_rounds, 5);
        assert_eq!(cfg.pipeline.train.knn_k, 5);
        assert_eq!(cfg.resolve_seed(Some(3)).unwrap(), 3);
        assert_eq!(cfg.resolve_seed(None).unwrap(), 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("clasifier = \"gbt\"").is_err());
    }
}
