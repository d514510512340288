//! Run provenance: every command that writes an output directory appends a
//! JSON line to `manifest.jsonl` there before doing anything else, so a
//! directory always records which command, seed, and inputs produced it.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// `<unix-seconds>-<seed as hex>`; unique enough to cross-reference logs.
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub timestamp_unix: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Fully resolved settings of the run, after defaults, file, and flags.
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let timestamp_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            run_id: format!("{timestamp_unix}-{seed:016x}"),
            command: command.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: serde_json::Value::Null,
        }
    }

    pub fn with_input(mut self, path: impl AsRef<Path>) -> Self {
        self.inputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn with_output(mut self, path: impl AsRef<Path>) -> Self {
        self.outputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Result<Self, ManifestError> {
        self.config = serde_json::to_value(config)?;
        Ok(self)
    }

    /// Appends this run as one line to `dir/manifest.jsonl`, creating the
    /// directory if needed.
    pub fn append(&self, dir: &Path) -> Result<(), ManifestError> {
        std::fs::create_dir_all(dir).map_err(|source| ManifestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join("manifest.jsonl");
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| ManifestError::Io {
                path: path.clone(),
                source,
            })?;
        let mut line = serde_json::to_string(self)?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .map_err(|source| ManifestError::Io { path, source })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_one_parseable_line_per_run() {
        let dir = tempfile::tempdir().unwrap();
        RunManifest::new("synth", 42)
            .with_output(dir.path().join("courses.csv"))
            .append(dir.path())
            .unwrap();
        RunManifest::new("preprocess", 43)
            .with_input("data")
            .with_config(&serde_json::json!({"duration_pct": 40.0}))
            .unwrap()
            .append(dir.path())
            .unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: RunManifest = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first.command, "synth");
        assert_eq!(first.seed, 42);
        assert!(first.run_id.ends_with(&format!("{:016x}", 42)));
        let second: RunManifest = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second.config["duration_pct"], 40.0);
        assert_eq!(second.inputs, vec!["data".to_string()]);
    }

    #[test]
    fn version_matches_package() {
        let m = RunManifest::new("train", 1);
        assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    }
}
