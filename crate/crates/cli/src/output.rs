//! Artifact writing and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: String,
    config: serde_json::Value,
    seed: Option<u64>,
}

/// Hex SHA-256 of the canonical JSON form of the resolved configuration.
pub fn config_hash(config: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes `body` to `out` plus a manifest next to it, or prints `body` to
/// stdout when no output path is given. Manifests carry no wall-clock data,
/// so reruns produce byte-identical files.
pub fn emit(out: Option<&Path>, body: &str, command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<()> {
    let Some(out) = out else {
        print!("{body}");
        return Ok(());
    };
    fs::write(out, body).with_context(|| format!("cannot write {}", out.display()))?;
    let config = serde_json::to_value(config).context("cannot serialize the configuration")?;
    let manifest = Manifest {
        tool: "rwrek",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash: config_hash(&config),
        config,
        seed,
    };
    let path = manifest_path(out);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}
