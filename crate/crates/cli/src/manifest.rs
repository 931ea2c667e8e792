use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub name: String,
    /// SHA-256 of the canonical JSON form of the configuration.
    pub config_sha256: String,
    /// Template label to corrector cache key.
    pub cache_keys: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub deterministic: bool,
    pub threads: usize,
    pub files: Vec<String>,
}

pub fn config_hash(canonical_json: &str) -> String {
    hex::encode(Sha256::digest(canonical_json.as_bytes()))
}

impl Manifest {
    pub fn new(command: &str, name: &str, canonical_json: &str, deterministic: bool) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert(
            "homcarl-cli".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        versions.insert(
            "homcarl-core".to_string(),
            homcarl_core::VERSION.to_string(),
        );
        Self {
            command: command.into(),
            name: name.into(),
            config_sha256: config_hash(canonical_json),
            cache_keys: BTreeMap::new(),
            versions,
            deterministic,
            threads: rayon::current_num_threads(),
            files: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}
