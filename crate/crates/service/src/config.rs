use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use talkplay_core::retrieval::WeightProfile;
use talkplay_model::RunnerConfig;

use crate::ServiceError;

/// Prefix of environment variables that override file settings.
pub const ENV_PREFIX: &str = "TALKPLAY_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub checkpoint: PathBuf,
    pub index: PathBuf,
    /// Catalog directory (tracks.jsonl, playlists.jsonl).
    pub catalog: PathBuf,
    /// Named profile or five comma-separated weights.
    #[serde(default = "default_weights")]
    pub weights: String,
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Recommendations returned per message.
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    /// Generations tried before answering with no recommendation.
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    /// Session directory; sessions live in memory when absent.
    #[serde(default)]
    pub store_dir: Option<PathBuf>,
    #[serde(default)]
    pub runner: RunnerConfig,
}

fn default_weights() -> String {
    "quadratic-c2f".into()
}
fn default_host() -> String {
    "127.0.0.1".into()
}
fn default_port() -> u16 {
    8080
}
fn default_top_n() -> usize {
    10
}
fn default_attempts() -> usize {
    3
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// applies `TALKPLAY_*` overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(std::env::vars())?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.checkpoint);
        fix(&mut self.index);
        fix(&mut self.catalog);
        if let Some(d) = self.store_dir.as_mut() {
            fix(d);
        }
    }

    /// Applies overrides such as `TALKPLAY_PORT=9000`. Variables with the
    /// prefix that name no setting (e.g. an API key) are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ServiceError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |e: &dyn std::fmt::Display| ServiceError::Config(format!("{key}={value:?}: {e}"));
            match name {
                "CHECKPOINT" => self.checkpoint = value.into(),
                "INDEX" => self.index = value.into(),
                "CATALOG" => self.catalog = value.into(),
                "WEIGHTS" => self.weights = value,
                "HOST" => self.host = value,
                "PORT" => self.port = value.parse().map_err(|e| bad(&e))?,
                "TOP_N" => self.top_n = value.parse().map_err(|e| bad(&e))?,
                "ATTEMPTS" => self.attempts = value.parse().map_err(|e| bad(&e))?,
                "STORE_DIR" => self.store_dir = (!value.is_empty()).then(|| value.into()),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn weight_profile(&self) -> Result<WeightProfile, ServiceError> {
        self.weights
            .parse()
            .map_err(|e| ServiceError::Config(format!("weights: {e}")))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.weight_profile()?;
        if self.top_n == 0 {
            return Err(ServiceError::Config("top_n must be >= 1".into()));
        }
        if self.attempts == 0 {
            return Err(ServiceError::Config("attempts must be >= 1".into()));
        }
        self.runner
            .sampling
            .validate()
            .map_err(|e| ServiceError::Config(e.to_string()))
    }
}
