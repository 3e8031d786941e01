//! Config loading and `--set key=value` overrides on dotted paths.

use std::fs;
use std::path::Path;

use serde_json::Value;
use unsc::experiment::{ExperimentConfig, TOY_PRESET};
use unsc::{Error, Result};

/// Reads `path` (or the bundled toy preset), applies the overrides in order
/// and validates the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) if !p.exists() => return Err(Error::MissingArtifact(p.to_path_buf())),
        Some(p) => fs::read_to_string(p)?,
        None => TOY_PRESET.to_string(),
    };
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let config: ExperimentConfig = serde_json::from_value(doc).map_err(|e| Error::Config(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// `a.b.0.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    if path.is_empty() {
        return Err(Error::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if !map.contains_key(*key) {
                    return Err(Error::Config(format!("unknown config key `{}`", keys[..=i].join("."))));
                }
                map.get_mut(*key).expect("checked")
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("`{}` indexes a list; expected a number", keys[..=i].join("."))))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range for `{}` (length {len})", keys[..i].join("."))))?
            }
            _ => return Err(Error::Config(format!("`{}` is not a section", keys[..i].join(".")))),
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    unreachable!("loop returns on the last key")
}
