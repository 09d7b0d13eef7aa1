//! Run manifests: the effective config, its hash, the seed and the digests
//! of every file a command read or wrote.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: &'a RunConfig,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("manifest", path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// Hash of the config's canonical JSON form.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_bytes(&serde_json::to_vec(cfg).expect("config serializes"))
}

fn digests(paths: &[PathBuf]) -> CliResult<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Write `manifest_<command>.json` into the output directory and return its path.
pub fn write_manifest(cfg: &RunConfig, command: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> CliResult<PathBuf> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
        config: cfg,
    };
    let path = cfg.output_dir.join(format!("manifest_{command}.json"));
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io("manifest", &path, e))?;
    Ok(path)
}
