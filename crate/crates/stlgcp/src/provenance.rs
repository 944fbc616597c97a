//! Tool version, config hash and seed stamped on every output.

use anyhow::{anyhow, Result};
use serde::{Deserialize, Serialize};

pub const TOOL: &str = "stlgcp";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// Comment line heading CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!("# {} {} config_hash={} seed={}", self.tool, self.version, self.config_hash, self.seed)
    }

    pub fn parse_comment(line: &str) -> Result<Self> {
        let bad = || anyhow!("not a provenance line: `{line}`");
        let mut it = line.strip_prefix('#').ok_or_else(bad)?.split_whitespace();
        let tool = it.next().ok_or_else(bad)?.to_string();
        let version = it.next().ok_or_else(bad)?.to_string();
        let config_hash = it.next().and_then(|s| s.strip_prefix("config_hash=")).ok_or_else(bad)?.to_string();
        let seed = it.next().and_then(|s| s.strip_prefix("seed=")).ok_or_else(bad)?.parse()?;
        Ok(Self {
            tool,
            version,
            config_hash,
            seed,
        })
    }
}
