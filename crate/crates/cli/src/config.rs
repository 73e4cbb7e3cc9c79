//! Flat `key = value` training configuration files. Keys mirror the long
//! flags of `fer train` (without the leading dashes); `augment.<field>` keys
//! set individual augmentation ranges. Blank lines and `#` comments are
//! ignored.

use std::fs;
use std::path::Path;

use fer_core::augment::AugmentPolicy;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected key = value, found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: invalid value '{value}' for {key}")]
    Value { line: usize, key: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        entries.push(Entry {
            line: i + 1,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

pub fn read(path: &Path) -> Result<Vec<Entry>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

fn parse_bool(entry: &Entry) -> Result<bool, ConfigError> {
    match entry.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(entry)),
    }
}

fn invalid(entry: &Entry) -> ConfigError {
    ConfigError::Value {
        line: entry.line,
        key: entry.key.clone(),
        value: entry.value.clone(),
    }
}

/// Turns the flag entries into command-line tokens. `flags` lists the long
/// names accepted, `switches` those among them that take no value.
pub fn to_args(entries: &[Entry], flags: &[&str], switches: &[&str]) -> Result<Vec<String>, ConfigError> {
    let mut args = Vec::new();
    for entry in entries.iter().filter(|e| !e.key.starts_with("augment.")) {
        if !flags.contains(&entry.key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line: entry.line,
                key: entry.key.clone(),
            });
        }
        if switches.contains(&entry.key.as_str()) {
            if parse_bool(entry)? {
                args.push(format!("--{}", entry.key));
            }
        } else {
            args.push(format!("--{}={}", entry.key, entry.value));
        }
    }
    Ok(args)
}

/// Applies `augment.<field>` entries on top of `policy`. Ranges are written
/// as `lo,hi`.
pub fn apply_augment(entries: &[Entry], mut policy: AugmentPolicy) -> Result<AugmentPolicy, ConfigError> {
    for entry in entries {
        let Some(field) = entry.key.strip_prefix("augment.") else {
            continue;
        };
        let scalar = || entry.value.parse::<f64>().map_err(|_| invalid(entry));
        let range = || {
            let (lo, hi) = entry.value.split_once(',').ok_or_else(|| invalid(entry))?;
            match (lo.trim().parse(), hi.trim().parse()) {
                (Ok(lo), Ok(hi)) => Ok((lo, hi)),
                _ => Err(invalid(entry)),
            }
        };
        match field {
            "flip_prob" => policy.flip_prob = scalar()?,
            "rotation_deg" => policy.rotation_deg = scalar()?,
            "shear_deg" => policy.shear_deg = scalar()?,
            "shift_frac" => policy.shift_frac = scalar()?,
            "zoom" => policy.zoom = range()?,
            "brightness" => policy.brightness = range()?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: entry.line,
                    key: entry.key.clone(),
                })
            }
        }
    }
    Ok(policy)
}
