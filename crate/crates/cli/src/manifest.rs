//! Per-run provenance record, written next to the run's primary output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; `replay` parses these again.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch. Fixed in deterministic mode.
    pub timestamp: u64,
    pub deterministic: bool,
    pub version: String,
}

/// `SOURCE_DATE_EPOCH` if set, else 0, in deterministic mode; wall clock
/// otherwise.
pub fn timestamp(deterministic: bool) -> u64 {
    if deterministic {
        return std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(0);
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// `<output>.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let name = primary
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    primary.with_file_name(format!("{name}.manifest.json"))
}

impl RunManifest {
    pub fn write(&self, primary: &Path) -> CliResult<PathBuf> {
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Format(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }
}
