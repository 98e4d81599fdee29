//! Per-command run manifests: what went in, what came out, with hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::formats::write_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub command_line: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub tool_version: String,
    pub wall_time_s: f64,
    /// File name → sha256 (hex).
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn display_name(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}

/// Collects inputs and outputs while a subcommand runs.
pub struct Recorder {
    command: String,
    out_dir: PathBuf,
    seed: u64,
    jobs: usize,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Recorder {
    pub fn new(command: &str, out_dir: &Path, seed: u64, jobs: usize) -> Self {
        Recorder {
            command: command.into(),
            out_dir: out_dir.into(),
            seed,
            jobs,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.inputs.insert(display_name(path, &self.out_dir), h);
        Ok(())
    }

    /// Writes `contents` into the output directory and records its hash.
    pub fn output(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        write_file(&path, contents)?;
        self.outputs.insert(name.into(), hex::encode(Sha256::digest(contents)));
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn finish(self, command_line: Vec<String>) -> Result<RunManifest> {
        let m = RunManifest {
            command: self.command.clone(),
            command_line,
            seed: self.seed,
            jobs: self.jobs,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_file(&self.out_dir.join(format!("{}.manifest.json", self.command)), text.as_bytes())?;
        Ok(m)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json { line: e.line(), detail: e.to_string() })
}
