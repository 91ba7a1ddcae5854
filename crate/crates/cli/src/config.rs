//! Config resolution: JSON file, then `--set key=value` overrides, then explicit flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::exit::CliError;

/// Recursively merges `patch` into `base`; objects merge key by key, anything else replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON and taken as a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::invalid(format!("override '{spec}' is not KEY=VALUE")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::invalid(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = value;
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), patch);
        patch = Value::Object(m);
    }
    merge(root, patch);
    Ok(())
}

/// Builds a flag patch from `(dotted key, value)` pairs, skipping unset flags.
pub fn flag_patch(pairs: Vec<(&str, Option<Value>)>) -> Value {
    let mut root = Value::Object(Map::new());
    for (key, value) in pairs {
        let Some(mut patch) = value else { continue };
        for part in key.rsplit('.') {
            let mut m = Map::new();
            m.insert(part.to_string(), patch);
            patch = Value::Object(m);
        }
        merge(&mut root, patch);
    }
    root
}

pub fn resolve<C: DeserializeOwned>(file: Option<&Path>, overrides: &[String], flags: Value) -> Result<C, CliError> {
    let mut root = Value::Object(Map::new());
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        if !v.is_object() {
            return Err(CliError::invalid(format!("{}: config must be a JSON object", path.display())));
        }
        merge(&mut root, v);
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    merge(&mut root, flags);
    serde_json::from_value(root).map_err(|e| CliError::invalid(format!("config: {e}")))
}

/// Writes the fully resolved config next to the run outputs.
pub fn write_resolved<C: Serialize>(out: &Path, cfg: &C) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join("config.json");
    let text = serde_json::to_string_pretty(cfg).map_err(|e| CliError::invalid(e.to_string()))? + "\n";
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// Parses `1,2.5,3` into numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| format!("'{p}' is not a number")))
        .collect()
}

/// Parses `50x100,100x200` into `(nodes, edges)` pairs.
pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize)>, String> {
    s.split(',')
        .map(|p| {
            let (a, b) = p.trim().split_once('x').ok_or_else(|| format!("size '{p}' is not NxE"))?;
            Ok((
                a.parse().map_err(|_| format!("bad node count in '{p}'"))?,
                b.parse().map_err(|_| format!("bad edge count in '{p}'"))?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_then_flags() {
        let mut root = json!({"train": {"epochs": 3, "lr0": 0.1}});
        apply_override(&mut root, "train.epochs=7").unwrap();
        apply_override(&mut root, "name=abc").unwrap();
        merge(&mut root, flag_patch(vec![("train.lr0", Some(json!(0.5))), ("seed", None)]));
        assert_eq!(root, json!({"train": {"epochs": 7, "lr0": 0.5}, "name": "abc"}));
        assert!(apply_override(&mut root, "novalue").is_err());
        assert!(apply_override(&mut root, "a..b=1").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("0,0.001, 0.01").unwrap(), vec![0.0, 0.001, 0.01]);
        assert!(parse_list::<f64>("0,x").is_err());
        assert_eq!(parse_sizes("50x100,20x30").unwrap(), vec![(50, 100), (20, 30)]);
        assert!(parse_sizes("50").is_err());
    }
}
