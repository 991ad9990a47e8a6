use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct InputRecord {
    role: &'static str,
    path: String,
    sha256: String,
}

fn sha256(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Collects inputs read and files to write, so that every output is
/// produced before anything touches disk and the manifest can list both.
pub struct Run {
    command: &'static str,
    inputs: Vec<InputRecord>,
    files: Vec<(String, Vec<u8>)>,
    extra: serde_json::Map<String, Value>,
}

impl Run {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            inputs: Vec::new(),
            files: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, role: &'static str, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::read(path, e))?;
        self.inputs.push(InputRecord {
            role,
            path: path.display().to_string(),
            sha256: sha256(&bytes),
        });
        Ok(bytes)
    }

    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let text = serde_json::to_string_pretty(value).expect("serializable output") + "\n";
        self.add(name, text);
    }

    /// Extra manifest entry.
    pub fn note<T: Serialize>(&mut self, key: &str, value: &T) {
        self.extra.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable note"),
        );
    }

    /// Writes every file, then `manifest.json`. Returns the written paths.
    pub fn finish(self, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        let dir = cfg.require_output()?;
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| CliError::write(&path, e))?;
            written.push(path);
        }
        let outputs: Vec<Value> = self
            .files
            .iter()
            .map(|(name, bytes)| json!({ "name": name, "sha256": sha256(bytes) }))
            .collect();
        let mut manifest = json!({
            "tool": "stagdid",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": stagdid::VERSION,
            "command": self.command,
            "seed": cfg.seed,
            "config": cfg.echo(),
            "inputs": self.inputs,
            "outputs": outputs,
        });
        for (k, v) in self.extra {
            manifest[k] = v;
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::write(&path, e))?;
        written.push(path);
        Ok(written)
    }
}
