use std::path::{Path, PathBuf};

use serde::Deserialize;
use stresslab_core::mat::ScoreboardEntry;
use stresslab_core::session::ProtocolConfig;
use thiserror::Error;

/// The configuration shipped with the service.
pub const DEFAULT_CONFIG: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("environment {var}={value:?}: {message}")]
    Env {
        var: &'static str,
        value: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub store_root: PathBuf,
    #[serde(default)]
    pub media_url: String,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub scoreboard: Vec<ScoreboardEntry>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig::from_toml(DEFAULT_CONFIG, "built-in defaults").expect("shipped config parses")
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<ServiceConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Read `path` (or the built-in defaults) and apply environment overrides.
    pub fn load(path: Option<&Path>) -> Result<ServiceConfig, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                ServiceConfig::from_toml(&text, &p.display().to_string())?
            }
            None => ServiceConfig::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var("STRESSLAB_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("STRESSLAB_PORT") {
            self.port = v.trim().parse().map_err(|e: std::num::ParseIntError| ConfigError::Env {
                var: "STRESSLAB_PORT",
                value: v.clone(),
                message: e.to_string(),
            })?;
        }
        if let Some(v) = var("STRESSLAB_STORE_ROOT") {
            self.store_root = PathBuf::from(v);
        }
        if let Some(v) = var("STRESSLAB_MEDIA_URL") {
            self.media_url = v;
        }
        Ok(())
    }

    pub fn media_url(&self) -> Option<&str> {
        Some(self.media_url.as_str()).filter(|u| !u.is_empty())
    }
}
