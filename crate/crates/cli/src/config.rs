//! Run configuration: a single JSON document; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sparsetrack_core::tracker::{DictionaryInit, TrackerConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sequence_dir: PathBuf,
    pub gt_path: PathBuf,
    pub out_dir: PathBuf,
    pub tracker: TrackerConfig,
    pub emit_annotated: bool,
    pub dictionary_init: DictionaryInit,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sequence_dir: PathBuf::new(),
            gt_path: PathBuf::new(),
            out_dir: PathBuf::new(),
            tracker: TrackerConfig::default(),
            emit_annotated: false,
            dictionary_init: DictionaryInit::Pca,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.tracker
            .validate()
            .map_err(|e| anyhow::anyhow!("tracker config: {e}"))?;
        if self.sequence_dir.as_os_str().is_empty() {
            anyhow::bail!("sequence_dir must be set");
        }
        if self.gt_path.as_os_str().is_empty() {
            anyhow::bail!("gt_path must be set");
        }
        if self.out_dir.as_os_str().is_empty() {
            anyhow::bail!("out_dir must be set");
        }
        Ok(())
    }
}
