//! Reproducibility envelope embedded in every report.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    /// Every resolved flag value, keyed by flag name.
    pub flags: BTreeMap<String, Value>,
    /// SHA-256 of each input file; directories hash their files in name order.
    pub inputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

/// Collects the manifest while a subcommand runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(subcommand: &str, seed: Option<u64>) -> Self {
        Self {
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                flags: BTreeMap::new(),
                inputs: BTreeMap::new(),
                wall_time_s: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn flag(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("flag values serialize");
        self.manifest.flags.insert(name.to_string(), v);
    }

    /// Reads `path` as text and records its digest under `flag`.
    pub fn read_input(&mut self, flag: &str, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.manifest.inputs.insert(flag.to_string(), hex::encode(Sha256::digest(text.as_bytes())));
        self.flag(flag, path.display().to_string());
        Ok(text)
    }

    /// Records the digest of every file directly inside `dir`.
    pub fn record_dir(&mut self, flag: &str, dir: &Path) -> Result<(), CliError> {
        let mut names: Vec<_> = fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(Result::ok)
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name())
            .collect();
        names.sort();
        let mut h = Sha256::new();
        for n in names {
            let path = dir.join(&n);
            let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            h.update(n.to_string_lossy().as_bytes());
            h.update([0u8]);
            h.update(Sha256::digest(&bytes));
        }
        self.manifest.inputs.insert(flag.to_string(), hex::encode(h.finalize()));
        self.flag(flag, dir.display().to_string());
        Ok(())
    }

    pub fn finish(mut self) -> RunManifest {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        self.manifest
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: &'a T,
}

/// Writes `{"manifest": ..., "result": ...}` as pretty JSON.
pub fn write_report<T: Serialize>(path: &Path, manifest: &RunManifest, result: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&Report { manifest, result }).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
