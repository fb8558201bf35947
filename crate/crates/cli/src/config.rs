//! Config files and `--set key=value` overrides.

use std::path::Path;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use jante::engine::RunConfig;

use crate::Failure;

pub fn load_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(Failure::Config)?;
    serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))
        .map_err(Failure::Config)
}

/// Applies one `key=value` override. Dotted keys descend into objects,
/// creating them as needed; the value is read as JSON and falls back to a
/// plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> anyhow::Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override `{spec}` is not of the form key=value");
    };
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` has an empty segment");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for seg in &path[..path.len() - 1] {
        if !node.is_object() {
            bail!("override `{key}`: `{seg}` is not inside an object");
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(path[path.len() - 1].to_string(), value);
            Ok(())
        }
        None => bail!("override `{key}` does not address an object field"),
    }
}

pub fn with_overrides(
    mut root: Value,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<Value, Failure> {
    for o in overrides {
        apply_override(&mut root, o).map_err(Failure::Config)?;
    }
    if let Some(seed) = seed {
        apply_override(&mut root, &format!("seed={seed}")).map_err(Failure::Config)?;
    }
    Ok(root)
}

pub fn decode<T: DeserializeOwned>(value: Value, what: &str) -> Result<T, Failure> {
    serde_json::from_value(value)
        .with_context(|| format!("invalid {what}"))
        .map_err(Failure::Config)
}

/// Reads, overrides, decodes and validates a run config.
pub fn parse_config(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<RunConfig, Failure> {
    let value = with_overrides(load_json(path)?, overrides, seed)?;
    let config: RunConfig = decode(value, "run config")?;
    config.validate().map_err(Failure::from_core)?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_overrides() {
        let mut v = json!({"N": 5, "dist": {"family": "Gaussian", "params": {"sd": 1}}});
        apply_override(&mut v, "K=3").unwrap();
        apply_override(&mut v, "dist.params.sd=2.5").unwrap();
        apply_override(&mut v, "dist.family=Cauchy").unwrap();
        apply_override(&mut v, "a.b.c=[1,2]").unwrap();
        assert_eq!(
            v,
            json!({"N": 5, "K": 3, "dist": {"family": "Cauchy", "params": {"sd": 2.5}}, "a": {"b": {"c": [1, 2]}}})
        );
        assert!(apply_override(&mut v, "N.x=1").is_err());
        assert!(apply_override(&mut v, "noequals").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
    }
}
