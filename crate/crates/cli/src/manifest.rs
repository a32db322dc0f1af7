use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::Units;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub seed: u64,
    pub out_dir: String,
    pub tool_version: String,
    pub timestamp_unix: u64,
    /// sha256 over the command, seed, tool version, units and resolved
    /// config: everything that determines the numbers.
    pub hash: String,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, out_dir: &Path, cfg: &Config, units: Units) -> Self {
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let payload = serde_json::json!({
            "command": command,
            "seed": cfg.seed,
            "tool_version": tool_version,
            "units": units.name(),
            "config": cfg,
        });
        let digest = Sha256::digest(payload.to_string().as_bytes());
        let hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        RunManifest {
            command: command.to_string(),
            config_path: config_path.display().to_string(),
            seed: cfg.seed,
            out_dir: out_dir.display().to_string(),
            tool_version,
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            hash,
        }
    }

    /// First line of every CSV output.
    pub fn csv_comment(&self) -> String {
        format!("# manifest {} command={} seed={}\n", self.hash, self.command, self.seed)
    }
}
