//! Every output file is accompanied by a `<file>.manifest.json` sidecar
//! recording the resolved invocation, input digests, seed, and toolkit
//! version, so any run can be reproduced from its outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::errors::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub options: Vec<String>,
    pub input_digests: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            options: std::env::args().skip(1).collect(),
            input_digests: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn digest_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.input_digests
            .insert(path.display().to_string(), format!("{digest:x}"));
        Ok(())
    }

    /// Write the sidecar next to `output`.
    pub fn write_for(&self, output: &Path) -> CliResult<()> {
        let mut sidecar = output.as_os_str().to_os_string();
        sidecar.push(".manifest.json");
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        std::fs::write(&sidecar, body + "\n")?;
        Ok(())
    }
}
