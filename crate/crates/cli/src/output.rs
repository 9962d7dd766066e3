//! Run manifests and artifact files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::Output;

/// Bumped whenever a report or manifest field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: Value,
    /// Master seed of the run; absent for deterministic subcommands.
    pub seed: Option<u64>,
    pub threads: usize,
    pub format: Format,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub summary: Value,
}

pub fn manifest_name(subcommand: &str) -> String {
    format!("{subcommand}.manifest.json")
}

/// Artifact bytes. The manifest reference comes first so that a file that
/// travels alone still names the run that produced it.
pub fn render(output: &Output, format: Format, manifest: Option<&str>) -> anyhow::Result<Vec<u8>> {
    Ok(match format {
        Format::Json => {
            let doc = json!({ "manifest": manifest, "report": output.report });
            let mut bytes = serde_json::to_vec_pretty(&doc)?;
            bytes.push(b'\n');
            bytes
        }
        Format::Csv => {
            let mut bytes = Vec::with_capacity(output.csv.len() + 64);
            if let Some(m) = manifest {
                writeln!(bytes, "# manifest: {m}")?;
            }
            bytes.extend_from_slice(&output.csv);
            bytes
        }
    })
}

/// Writes the artifact and its manifest into `dir`; returns both paths.
pub fn write_run(
    dir: &Path,
    output: &Output,
    mut manifest: RunManifest,
) -> anyhow::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let data_name = format!("{}.{}", manifest.subcommand, manifest.format.extension());
    let manifest_file = manifest_name(&manifest.subcommand);
    let data_path = dir.join(&data_name);
    let manifest_path = dir.join(&manifest_file);
    fs::write(&data_path, render(output, manifest.format, Some(&manifest_file))?)
        .with_context(|| format!("writing {}", data_path.display()))?;
    manifest.outputs = vec![data_name];
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(&manifest_path, bytes).with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok((data_path, manifest_path))
}
