//! Run configuration files: an `[env]` table and a `[train]` table in TOML.

use std::path::Path;

use anyhow::{Context, Result};
use capscan_core::env::{EnvConfig, PhantomSpec};
use capscan_learn::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// The desk-scale sphere scenario with default training settings.
    pub fn desk_sphere() -> Self {
        Self {
            env: EnvConfig::desk_sphere(),
            train: TrainConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; a relative phantom path resolves against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
        if let PhantomSpec::File { path: mesh } = &mut cfg.env.phantom {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate().context("invalid [env] section")?;
        self.train.validate().context("invalid [train] section")?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).context("serializing run config")
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_toml_string()?.as_bytes())))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
