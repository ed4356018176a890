//! Every command writes exactly one `manifest.json` next to its
//! outputs, recording the resolved config and the hashes of all inputs
//! and outputs so reruns can be compared byte-for-byte.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub wall_clock_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(root: &Path, path: &Path) -> Result<FileHash> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let rel = path
        .strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/");
    Ok(FileHash {
        path: rel,
        sha256: sha256_hex(&bytes),
    })
}

/// Collects inputs/outputs during a run and writes the manifest last.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn add_input(&mut self, entry: FileHash) {
        self.inputs.push(entry);
    }

    pub fn add_output(&mut self, entry: FileHash) {
        self.outputs.push(entry);
    }

    /// Hash a freshly written output file relative to the output root.
    pub fn add_output_file(&mut self, out_root: &Path, path: &Path) -> Result<()> {
        self.outputs.push(hash_file(out_root, path)?);
        Ok(())
    }

    pub fn write(mut self, out_dir: &Path) -> Result<RunManifest> {
        self.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}
