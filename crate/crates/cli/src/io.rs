//! File access, configuration resolution and error classes.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use proxforge::config::GenConfig;
use proxforge::jsonl::read_jsonl;
use proxforge::provenance::Provenance;

use crate::GenOptions;

pub const SEED_ENV: &str = "PROXFORGE_SEED";

/// Bad invocation: missing flag or input. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Input data that cannot be used as is. Exit code 2.
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn data(msg: impl Into<String>) -> anyhow::Error {
    DataError(msg.into()).into()
}

/// The flag value, else the config value, else a usage error.
pub fn required(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| usage(format!("missing --{name} (or paths.{} in the config)", name.replace('-', "_"))))
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(usage(format!("input not found: {}", path.display())))
        }
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_input(path)?).map_err(|_| data(format!("{} is not UTF-8", path.display())))
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<(Option<Provenance>, Vec<T>)> {
    let text = read_text(path)?;
    read_jsonl(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => write_output(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Config file, then flag overrides, then the environment seed fallback.
pub fn resolve_config(opts: &GenOptions) -> Result<GenConfig> {
    let (mut config, file_has_seed) = match &opts.config {
        Some(path) => {
            let text = read_text(path)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))?;
            let has_seed = value.get("seed").is_some();
            let config =
                GenConfig::from_json(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            (config, has_seed)
        }
        None => (GenConfig::default(), false),
    };
    match opts.seed {
        Some(seed) => config.seed = seed,
        None if !file_has_seed => {
            if let Ok(text) = std::env::var(SEED_ENV) {
                config.seed = text
                    .trim()
                    .parse()
                    .map_err(|_| usage(format!("{SEED_ENV}={text:?} is not an unsigned integer")))?;
            }
        }
        None => {}
    }
    if let Some(m) = opts.max_pairs {
        config.max_pairs_per_image = m;
    }
    if let Some(p) = opts.perception_cap {
        config.perception_cap = Some(p);
    }
    if let Some(r) = &opts.mode_ratio {
        config.mode_ratio = r.parse().map_err(|e| usage(format!("{e}")))?;
    }
    if let Some(e) = opts.epsilon {
        config.epsilon = e;
    }
    if let Some(w) = opts.median_window {
        config.median_window = w;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

/// Config for commands that only need the file (no generation flags).
pub fn load_config(path: &Option<PathBuf>) -> Result<GenConfig> {
    resolve_config(&GenOptions {
        config: path.clone(),
        ..Default::default()
    })
}
