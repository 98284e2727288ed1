use std::path::Path;

use super::{parse_error, read_text};
use crate::error::Result;
use crate::pipeline::TrainConfig;

/// Applies `key = value` lines from `text` on top of `base`. Blank lines and
/// `#` comments are skipped; unknown keys and bad values are errors naming
/// the line.
pub fn parse_config(text: &str, path: &Path, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_error(path, i + 1, "expected `key = value`"))?;
        cfg.set(key.trim(), value.trim())
            .map_err(|e| parse_error(path, i + 1, e.to_string()))?;
    }
    Ok(cfg)
}

/// Reads a config file over the defaults.
pub fn read_config(path: &Path) -> Result<TrainConfig> {
    parse_config(&read_text(path)?, path, TrainConfig::default())
}
