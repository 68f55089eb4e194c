//! Machine-readable record of a run: what went in, what came out, and how.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FileDigest {
    /// File name only, so summaries of runs in different directories compare equal.
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Failure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Complete,
    /// Some records failed; the outputs of the others were written.
    Partial,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub tool: &'static str,
    pub version: &'static str,
    pub model_schema: &'static str,
    pub prior_schema: &'static str,
    pub subcommand: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// SHA-256 over the input digests in order.
    pub inputs_digest: String,
    pub outputs: Vec<FileDigest>,
    pub status: Status,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

/// What a subcommand reports back for the summary.
#[derive(Debug, Default)]
pub struct Run {
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn digests(paths: &[PathBuf]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                name: p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl RunSummary {
    pub fn build(subcommand: &'static str, seed: u64, run: Run) -> anyhow::Result<Self> {
        let inputs = digests(&run.inputs)?;
        let mut h = Sha256::new();
        for d in &inputs {
            h.update(d.sha256.as_bytes());
        }
        Ok(Self {
            tool: "handsynth",
            version: env!("CARGO_PKG_VERSION"),
            model_schema: handsynth_core::handmodel::MODEL_SCHEMA,
            prior_schema: handsynth_core::prior::PRIOR_SCHEMA,
            subcommand,
            seed,
            config: run.config,
            inputs,
            inputs_digest: hex(&h.finalize()),
            outputs: digests(&run.outputs)?,
            status: if run.failures.is_empty() {
                Status::Complete
            } else {
                Status::Partial
            },
            failures: run.failures,
            warnings: run.warnings,
        })
    }
}
