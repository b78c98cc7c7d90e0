// SPDX-License-Identifier: Apache-2.0

//! Service and CLI configuration, stored as TOML in format `cfg/1`.
//!
//! ```toml
//! format = "cfg/1"
//! store = "twin-store"
//! listen = "127.0.0.1:7878"
//! extractor = "python"
//! paranoid = false
//! # lexicon = "cues.lex"
//!
//! [defaults]
//! hops = 2
//! node_budget = 40
//! token_budget = 2000
//! seeds = 3
//! impact_hops = 1
//!
//! [defaults.weights]
//! boundary = 3.0
//! public = 2.0
//! constraint_path = 2.0
//! ```
//!
//! `TWIN_STORE` and `TWIN_LISTEN` override `store` and `listen`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_core::extractors::{FACTS_EXTRACTOR, PYTHON_EXTRACTOR};
use twin_core::knowledge::lexicon::Lexicon;
use twin_core::query::RankWeights;
use twin_core::store::TwinConfig;

pub const CFG_FORMAT: &str = "cfg/1";
pub const MAX_HOPS: usize = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config value out of range: {0}")]
    Range(String),
    #[error("lexicon {path}: {reason}")]
    Lexicon { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Defaults {
    pub hops: usize,
    pub node_budget: usize,
    pub token_budget: usize,
    pub seeds: usize,
    /// Widening hops for incremental updates (`k`).
    pub impact_hops: usize,
    pub weights: RankWeights,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            hops: 2,
            node_budget: 40,
            token_budget: 2000,
            seeds: 3,
            impact_hops: 1,
            weights: RankWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub format: String,
    pub store: PathBuf,
    pub listen: String,
    pub extractor: String,
    pub paranoid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub defaults: Defaults,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            format: CFG_FORMAT.into(),
            store: PathBuf::from("twin-store"),
            listen: "127.0.0.1:7878".into(),
            extractor: PYTHON_EXTRACTOR.into(),
            paranoid: false,
            lexicon: None,
            defaults: Defaults::default(),
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig =
            toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads `path` if given, else defaults; then applies environment
    /// overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.into(),
                    source,
                })?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(s) = var("TWIN_STORE").filter(|s| !s.is_empty()) {
            self.store = s.into();
        }
        if let Some(l) = var("TWIN_LISTEN").filter(|s| !s.is_empty()) {
            self.listen = l;
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let range = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Range(what.to_string()))
            }
        };
        range(
            self.format == CFG_FORMAT,
            &format!("format must be {CFG_FORMAT}"),
        )?;
        range(
            [PYTHON_EXTRACTOR, FACTS_EXTRACTOR].contains(&self.extractor.as_str()),
            "extractor must be python or facts",
        )?;
        let d = &self.defaults;
        range(d.hops <= MAX_HOPS, "defaults.hops must be at most 16")?;
        range(
            d.impact_hops <= MAX_HOPS,
            "defaults.impact_hops must be at most 16",
        )?;
        range(d.node_budget >= 1, "defaults.node_budget must be positive")?;
        range(
            d.token_budget >= 1,
            "defaults.token_budget must be positive",
        )?;
        range(d.seeds >= 1, "defaults.seeds must be positive")?;
        let w = d.weights;
        range(
            [w.boundary, w.public, w.constraint_path]
                .iter()
                .all(|x| x.is_finite() && *x >= 0.0),
            "weights must be finite and non-negative",
        )
    }

    /// Pipeline settings, reading the lexicon file when one is configured.
    pub fn twin_config(&self) -> Result<TwinConfig, ConfigError> {
        let lexicon = match &self.lexicon {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.clone(),
                    source,
                })?;
                Lexicon::parse(&text).map_err(|e| ConfigError::Lexicon {
                    path: p.clone(),
                    reason: e.to_string(),
                })?
            }
            None => Lexicon::default(),
        };
        Ok(TwinConfig {
            extractor: self.extractor.clone(),
            lexicon,
            impact_hops: self.defaults.impact_hops,
            paranoid: self.paranoid,
            ..TwinConfig::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ServiceConfig::default();
        assert_eq!(ServiceConfig::parse(&cfg.render()).unwrap(), cfg);
        assert_eq!(ServiceConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn rejects_out_of_range_and_unknown_keys() {
        assert!(matches!(
            ServiceConfig::parse("[defaults]\nnode_budget = 0"),
            Err(ConfigError::Range(_))
        ));
        assert!(matches!(
            ServiceConfig::parse("format = \"cfg/2\""),
            Err(ConfigError::Range(_))
        ));
        assert!(matches!(
            ServiceConfig::parse("colour = 1"),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn env_overrides_store_and_listen() {
        let mut cfg = ServiceConfig::default();
        cfg.apply_env(|k| match k {
            "TWIN_STORE" => Some("/tmp/s".into()),
            "TWIN_LISTEN" => Some("0.0.0.0:9".into()),
            _ => None,
        });
        assert_eq!(cfg.store, PathBuf::from("/tmp/s"));
        assert_eq!(cfg.listen, "0.0.0.0:9");
    }
}
