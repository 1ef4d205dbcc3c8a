//! Run manifests: what was run, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use onconet::io::write_text;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "run-manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| onconet::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    /// Input path → content hash.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub timestamp: u64,
    /// Output paths relative to the run directory.
    pub outputs: Vec<String>,
    /// Command-specific facts (model tag, variant, parameter count, ...).
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, canonical_config: &str, seed: u64) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            config_digest: sha256_hex(canonical_config.as_bytes()),
            inputs: BTreeMap::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            outputs: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn detail(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.details.insert(key.to_string(), value.into());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_text(&path, &text)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = onconet::io::read_text(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed manifest {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_string() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "x").unwrap();
        let mut m = RunManifest::new("train", "a = 1", 5);
        m.add_input(&input).unwrap();
        m.outputs.push("predictions.csv".into());
        m.detail("params", 12);
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
    }
}
