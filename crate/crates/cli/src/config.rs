use std::path::Path;

use serde_json::Value;
use timebin::RunConfig;

use crate::CliError;

/// Parses a cycle count, accepting integer or scientific notation (`1e6`).
pub fn parse_cycles(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !(v >= 0.0 && v.fract() == 0.0 && v < 1.8e19) {
        return Err(format!("cycle count must be a non-negative integer, got {s}"));
    }
    Ok(v as u64)
}

/// `KEY=VALUE` where the value is JSON if it parses as such, else a string.
pub fn parse_override(s: &str) -> Result<(String, Value), String> {
    let (key, raw) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s}"))?;
    if key.is_empty() {
        return Err(format!("empty key in {s}"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets the dotted path `key` (numeric segments index arrays) in `doc`.
pub fn apply_override(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let bad = |reason: String| CliError::Config(format!("--set {key}: {reason}"));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| bad(format!("`{part}` is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| bad(format!("index {idx} out of range (length {len})")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), Value::Null);
                }
                map.get_mut(*part).ok_or_else(|| bad(format!("no field `{part}`")))?
            }
            Value::Null if !last => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else { unreachable!() };
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            _ => return Err(bad(format!("cannot descend into `{part}`"))),
        };
    }
    *node = value;
    Ok(())
}

/// Loads a run configuration: file (or built-in defaults), then overrides,
/// then explicit seed and cycle count.
pub fn load(
    path: Option<&Path>,
    overrides: &[(String, Value)],
    seed: Option<u64>,
    cycles: Option<u64>,
) -> Result<RunConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(RunConfig::default()).expect("default config serializes"),
    };
    for (k, v) in overrides {
        apply_override(&mut doc, k, v.clone())?;
    }
    if let Some(s) = seed {
        apply_override(&mut doc, "seed", s.into())?;
    }
    if let Some(c) = cycles {
        apply_override(&mut doc, "cycles", c.into())?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let origin = path.map_or_else(|| "config".to_string(), |p| p.display().to_string());
        CliError::Config(format!("{origin}: field `{}`: {}", e.path(), e.inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}
