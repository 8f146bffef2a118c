use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Provenance record written by every command next to its outputs.
/// File paths are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub config_sha256: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config_bytes: &[u8]) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            config_sha256: sha256_hex(config_bytes),
            started_unix: now_unix(),
            finished_unix: 0,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Records the digests of `files` (relative to `root`).
    pub fn record(map: &mut BTreeMap<String, String>, root: &Path, files: &[String]) -> Result<()> {
        for f in files {
            map.insert(f.clone(), file_digest(&root.join(f))?);
        }
        Ok(())
    }

    /// Equal up to timestamps.
    pub fn same_run(&self, other: &Self) -> bool {
        Self {
            started_unix: 0,
            finished_unix: 0,
            ..self.clone()
        } == Self {
            started_unix: 0,
            finished_unix: 0,
            ..other.clone()
        }
    }
}
