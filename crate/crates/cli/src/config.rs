//! Run configuration, read from TOML and echoed into the manifest.
//!
//! ```toml
//! seed = 7
//!
//! [mc]
//! samples = 500
//! sweeps = 2000
//! burn_in = 0
//! blocks = 40
//! tempering = [0.2, 0.3]
//! ```
//!
//! Every key is optional; command-line flags override the file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use seplab::statmech::McParams;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mc: McConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub samples: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub blocks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tempering: Option<Vec<f64>>,
}

impl Default for McConfig {
    fn default() -> Self {
        let d = McParams::default();
        McConfig {
            samples: d.samples,
            sweeps: d.sweeps,
            burn_in: d.burn_in,
            blocks: d.blocks,
            tempering: d.tempering,
        }
    }
}

impl McConfig {
    pub fn params(&self, seed: u64) -> McParams {
        McParams {
            samples: self.samples,
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            blocks: self.blocks,
            seed,
            tempering: self.tempering.clone(),
        }
    }
}

/// Errors here are usage errors, not run failures.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e:#}", path.display())).into())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).context("config schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.mc.samples == 0 || self.mc.sweeps == 0 || self.mc.blocks == 0 {
            bail!("mc.samples, mc.sweeps and mc.blocks must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = Config::parse("seed = 3\n[mc]\nsamples = 10\ntempering = [0.1, 0.2]\n").unwrap();
        assert_eq!(cfg.mc.samples, 10);
        assert_eq!(cfg.mc.sweeps, McParams::default().sweeps);
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("[mc]\nsample = 10\n").is_err());
        assert!(Config::parse("[mc]\nsamples = 0\n").is_err());
    }
}
