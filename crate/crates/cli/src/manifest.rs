//! `manifest.json`: what a command was run with and what it wrote.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Every setting the command ran with, after defaults were applied.
    pub config: serde_json::Value,
    /// Files written by the command, relative to the manifest's directory.
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per phase. The only non-reproducible field.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn artifact(&mut self, name: impl Into<String>) {
        self.artifacts.push(name.into());
    }

    pub fn timing(&mut self, phase: &str, seconds: f64) {
        self.timings.insert(phase.to_string(), seconds);
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("synth", 7, &serde_json::json!({"count": 2}));
        m.artifact("image_0.pgm");
        m.timing("total", 0.5);
        m.write(dir.path()).unwrap();
        assert_eq!(
            RunManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap(),
            m
        );
    }
}
