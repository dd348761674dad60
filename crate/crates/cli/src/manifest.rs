use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Cli;
use crate::{commands, CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Command-line arguments without the output directory.
    pub args: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<OutputFile>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn file_name(subcommand: &str) -> String {
        format!("{subcommand}.manifest.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Drops `--out <dir>` / `--out=<dir>` so a manifest can be replayed
/// anywhere.
pub fn recorded_args(argv: &[OsString]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        let a = a.to_string_lossy().into_owned();
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") {
            continue;
        }
        out.push(a);
    }
    out
}

/// Outcome of replaying one manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    /// `(path, expected, reproduced)` per output file.
    pub files: Vec<(String, String, String)>,
    /// Recorded files next to the manifest whose hash does not match it.
    pub stale: Vec<String>,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        self.stale.is_empty() && self.files.iter().all(|(_, a, b)| a == b)
    }
}

/// Re-runs `manifest` into a scratch directory and compares every output's
/// hash; files stored beside the manifest are checked against it as well.
pub fn replay(manifest_path: &Path) -> Result<ReplayReport> {
    let manifest = RunManifest::load(manifest_path)?;
    if manifest.subcommand == "replay" {
        return Err(CliError::Usage("a replay manifest cannot be replayed".into()));
    }
    let scratch = tempfile::tempdir().map_err(|e| CliError::io(std::env::temp_dir(), e))?;
    let mut argv: Vec<OsString> = vec!["dropreg".into()];
    argv.extend(manifest.args.iter().map(OsString::from));
    argv.push("--out".into());
    argv.push(scratch.path().into());
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(format!("manifest arguments: {e}")))?;
    commands::execute(&cli, &manifest.args)?;
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut report = ReplayReport {
        files: Vec::new(),
        stale: Vec::new(),
    };
    for out in &manifest.outputs {
        let fresh = scratch.path().join(&out.path);
        let bytes = std::fs::read(&fresh).map_err(|e| CliError::io(&fresh, e))?;
        report
            .files
            .push((out.path.clone(), out.sha256.clone(), sha256_hex(&bytes)));
        if let Ok(stored) = std::fs::read(dir.join(&out.path)) {
            if sha256_hex(&stored) != out.sha256 {
                report.stale.push(out.path.clone());
            }
        }
    }
    Ok(report)
}
