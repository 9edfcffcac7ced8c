//! Provenance record written next to every output.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::Provenance;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub seed: u64,
    pub dataset: Option<Provenance>,
    /// Matrix files read besides the data set.
    pub inputs: Vec<InputFile>,
    /// Distance grid in RMS units, for sweeps.
    pub grid: Option<Vec<f64>>,
    pub kernels: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command_line: std::env::args().collect(),
            subcommand: subcommand.to_string(),
            seed,
            dataset: None,
            inputs: Vec::new(),
            grid: None,
            kernels: Vec::new(),
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    /// `<out>.manifest.json`
    pub fn path_for(out: &Path) -> PathBuf {
        sibling(out, "manifest.json")
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = Self::path_for(out);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

/// `<out>.<suffix>`, keeping the full original file name.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}
