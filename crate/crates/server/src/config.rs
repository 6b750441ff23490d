//! Server settings from a TOML file and `ROBOMEM_*` environment variables.

use std::path::{Path, PathBuf};

use robomem_core::recall::{RecallConfig, RecallError, RecallMode};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid {var}: {reason}")]
    Env { var: &'static str, reason: String },
    #[error(transparent)]
    Recall(#[from] RecallError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub store_root: PathBuf,
    /// Recall settings for sessions that do not override them.
    pub mode: RecallMode,
    pub threshold: f64,
    pub seed: u64,
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let recall = RecallConfig::default();
        Self {
            store_root: PathBuf::from("robomem-data"),
            mode: recall.mode,
            threshold: recall.threshold,
            seed: recall.seed,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.recall().validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `ROBOMEM_STORE_ROOT`, `ROBOMEM_MODE`, `ROBOMEM_THRESHOLD`,
    /// `ROBOMEM_SEED` and `ROBOMEM_BIND` from `var` over the current values.
    pub fn with_env(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        fn parsed<T: std::str::FromStr>(var: &'static str, raw: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            raw.trim().parse().map_err(|e: T::Err| ConfigError::Env {
                var,
                reason: e.to_string(),
            })
        }
        if let Some(v) = var("ROBOMEM_STORE_ROOT") {
            self.store_root = PathBuf::from(v);
        }
        if let Some(v) = var("ROBOMEM_MODE") {
            self.mode = parsed("ROBOMEM_MODE", &v)?;
        }
        if let Some(v) = var("ROBOMEM_THRESHOLD") {
            self.threshold = parsed("ROBOMEM_THRESHOLD", &v)?;
        }
        if let Some(v) = var("ROBOMEM_SEED") {
            self.seed = parsed("ROBOMEM_SEED", &v)?;
        }
        if let Some(v) = var("ROBOMEM_BIND") {
            self.bind = v;
        }
        self.recall().validate()?;
        Ok(self)
    }

    pub fn recall(&self) -> RecallConfig {
        RecallConfig {
            mode: self.mode,
            threshold: self.threshold,
            seed: self.seed,
        }
    }
}
