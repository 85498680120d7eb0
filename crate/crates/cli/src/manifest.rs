//! Run manifests, written before any artifact of a run.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_SCHEMA: &str = "ropelab.run-manifest/1";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub subcommand: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
    pub tool_version: &'static str,
    /// Seconds since the Unix epoch. The only field that varies between
    /// otherwise identical runs.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &impl Serialize, seed: Option<u64>, artifacts: &[&Path]) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA,
            subcommand: subcommand.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

/// `<artifact>.manifest.json`, next to the run's main artifact.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// `artifact` with `suffix` appended to its file name.
pub fn sibling(artifact: &Path, suffix: &str) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}
