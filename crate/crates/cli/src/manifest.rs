//! Writing outputs, the run manifest, and manifest replay.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::{self, Report};
use crate::config::RunConfig;
use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub base_seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_outputs(out: &Path, report: &Report) -> Result<Vec<FileEntry>, Failure> {
    fs::create_dir_all(out).map_err(Failure::io)?;
    report
        .files
        .iter()
        .map(|(name, bytes)| {
            fs::write(out.join(name), bytes).map_err(Failure::io)?;
            Ok(FileEntry {
                path: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            })
        })
        .collect()
}

/// Runs `command`, writes its files and manifest into `out`, and prints the
/// summary. Failed numerical checks are reported after the files are
/// written.
pub fn execute(command: &str, cfg: &RunConfig, out: &Path, workers: usize) -> Result<Manifest, Failure> {
    let start = Instant::now();
    let report = commands::run(command, cfg, workers)?;
    let files = write_outputs(out, &report)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: cfg.clone(),
        base_seed: cfg.seed(),
        workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::check("manifest", e.to_string()))?;
    fs::write(out.join(MANIFEST), json + "\n").map_err(Failure::io)?;
    for line in &report.summary {
        println!("{line}");
    }
    println!("wrote {} files to {}", manifest.files.len(), out.display());
    if let Some((invariant, message)) = report.failed.first() {
        return Err(Failure::check(invariant, message.clone()));
    }
    Ok(manifest)
}

/// Re-runs the manifest's command and configuration into `out` and
/// compares every file hash.
pub fn replay(path: &Path, out: &Path, workers: usize) -> Result<(), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config("manifest", format!("cannot read {}: {e}", path.display())))?;
    let original: Manifest = serde_json::from_str(&text).map_err(|e| Failure::config("manifest", e.to_string()))?;
    let fresh = execute(&original.command, &original.config, out, workers)?;
    let mismatched: Vec<&str> = original
        .files
        .iter()
        .filter(|f| !fresh.files.contains(f))
        .map(|f| f.path.as_str())
        .collect();
    if mismatched.is_empty() && fresh.files.len() == original.files.len() {
        println!("replay reproduced all {} files", fresh.files.len());
        Ok(())
    } else {
        Err(Failure::check(
            "reproducibility",
            format!("replayed outputs differ: {}", mismatched.join(", ")),
        ))
    }
}
