//! Run manifests: enough provenance (config digest, seed, crate version) to
//! reproduce an output directory bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: String,
    pub schema_version: u32,
}

impl RunManifest {
    pub fn new(config_json: &str, seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_json.as_bytes());
        Self {
            config_sha256: format!("{:x}", hasher.finalize()),
            seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: super::config::SCHEMA_VERSION,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest.json");
        fs::write(
            &path,
            serde_json::to_string_pretty(self).expect("manifest serializes"),
        )?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| LabError::Parse(e.to_string()))
    }
}
