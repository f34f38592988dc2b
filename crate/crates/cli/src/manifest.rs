// SPDX-License-Identifier: Apache-2.0

//! Run manifests: enough to repeat a run and find everything it wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    /// Directory the arguments' relative paths refer to.
    pub working_dir: PathBuf,
    pub params: Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// What a subcommand reports back for its manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub params: Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    /// Manifest location when the user gives none.
    pub default_manifest: Option<PathBuf>,
}

/// `<path>.manifest.json` next to an output file.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
