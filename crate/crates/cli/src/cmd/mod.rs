use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use talkplay_service::ServiceConfig;

pub mod catalog;
pub mod eval;
pub mod fixture;
pub mod item2vec;
pub mod model;
pub mod quantize;
pub mod recsys;
pub mod synth;
pub mod tokenize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| path.display().to_string())
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    toml::from_str(&text).with_context(|| path.display().to_string())
}

pub fn serve(config: PathBuf) -> Result<()> {
    let cfg = ServiceConfig::load(&config)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(talkplay_service::serve(cfg))?;
    Ok(())
}
