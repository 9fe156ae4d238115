//! Optional TOML file of flag defaults. Keys are the long flag names.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub cutoff: Option<f64>,
    pub size: Option<usize>,
    pub iters: Option<usize>,
    pub warmup: Option<usize>,
    pub lr: Option<f64>,
    pub optimizer: Option<String>,
    pub mc_loss: Option<String>,
    pub reduction: Option<String>,
    pub w_2d: Option<f64>,
    pub w_3d: Option<f64>,
    pub w_theta: Option<f64>,
    pub w_mc: Option<f64>,
    pub w_c: Option<f64>,
    pub eps_bg: Option<f64>,
    pub offset: Option<usize>,
    pub min_pixels: Option<usize>,
    pub precision: Option<String>,
    pub step: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag, then config file, then built-in default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Same precedence for enum-valued settings spelled as strings in the file.
pub fn pick_enum<T: clap::ValueEnum + Clone>(flag: Option<T>, file: &Option<String>, key: &str, default: T) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file {
        Some(s) => T::from_str(s, true).map_err(|e| anyhow::anyhow!("config key {key}: {e}")),
        None => Ok(default),
    }
}
