//! Top-level pipeline configuration: one JSON file, overridable per
//! command by flags.

use anyhow::{Context, Result};
use forge_core::ingest::EndpointConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub endpoint: EndpointConfig,
    /// Cache root directory; `FORGE_CACHE_ROOT` overrides it.
    #[serde(default = "default_cache_root")]
    pub cache_root: PathBuf,
    /// When set, never touch the network; cache misses are errors.
    #[serde(default)]
    pub offline: bool,
    /// Seed for deterministically initialized encoder weights, used
    /// when no weight file is given.
    #[serde(default = "default_seed")]
    pub encoder_seed: u64,
    /// Optional encoder weight file overriding the seeded default.
    #[serde(default)]
    pub weights_path: Option<PathBuf>,
    /// Default parallelism bound; `--jobs` overrides.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_cache_root() -> PathBuf {
    PathBuf::from("cache")
}

fn default_seed() -> u64 {
    42
}

fn default_jobs() -> usize {
    4
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config
            .endpoint
            .validate()
            .with_context(|| format!("validating config {}", path.display()))?;
        Ok(config)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
