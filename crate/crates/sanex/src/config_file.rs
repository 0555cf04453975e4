//! Flat `key = value` configuration files.
//!
//! One assignment per line. `#` starts a comment that runs to the end of the
//! line, blank lines are ignored, and keys are the [`TrainConfig`] field
//! names. Keys that are not given keep their defaults; a key may appear
//! only once.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use sanex_core::agent::TrainConfig;

use crate::CliError;

pub fn parse_config(text: &str, path: &Path) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::format(path, i + 1, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(CliError::format(path, i + 1, format!("duplicate key `{key}`")));
        }
        cfg.set(key, value)
            .map_err(|e| CliError::format(path, i + 1, e.to_string()))?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path)
}

/// Renders every field, readable by [`parse_config`].
pub fn render_config(cfg: &TrainConfig) -> String {
    cfg.to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}
