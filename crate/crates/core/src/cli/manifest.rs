use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// Provenance written next to every output file as `<out>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
}

pub(super) struct ManifestBuilder {
    subcommand: &'static str,
    config: serde_json::Value,
    inputs: Vec<String>,
    master_seed: Option<u64>,
    started: DateTime<Utc>,
}

pub(super) fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, "manifest.json")
}

/// `<out>.<suffix>` in the directory of `out`.
pub(super) fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}

impl ManifestBuilder {
    pub(super) fn start<C: Serialize>(subcommand: &'static str, config: &C, inputs: &[&Path], master_seed: Option<u64>) -> Self {
        ManifestBuilder {
            subcommand,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            master_seed,
            started: Utc::now(),
        }
    }

    /// Writes the manifest beside `primary`, listing every output.
    pub(super) fn finish(self, primary: &Path, outputs: &[PathBuf]) -> std::io::Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            config: self.config,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            master_seed: self.master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        std::fs::write(manifest_path(primary), json + "\n")
    }
}
