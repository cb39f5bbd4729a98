//! Flat `key = value` run configuration files.
//!
//! One pair per line. Blank lines and lines starting with `#` are ignored.
//! Every key is a [`RunConfig`] field; missing keys keep their defaults.

use std::collections::HashSet;
use std::path::Path;

use bilevel_core::trainer::RunConfig;
use bilevel_core::{Error, Result};

/// Parse configuration text, then apply `key=value` overrides, then
/// validate.
pub fn parse_config_text(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {}: key `{key}` given twice", n + 1)));
        }
        cfg.set(key, value.trim()).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
            other => other,
        })?;
    }
    for o in overrides {
        let (key, value) =
            o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not of the form key=value")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// [`parse_config_text`] on a file; no path means an empty file.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config_text(&text, overrides)
}
