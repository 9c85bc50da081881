//! Run configuration layering: built-in defaults, then a TOML file of flat
//! dotted keys (`mcmc.epoch_len = 5000`), then command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

pub type Flat = BTreeMap<String, Value>;

/// Flattens nested objects into dotted keys; arrays and scalars are leaves.
pub fn flatten(value: &Value) -> Flat {
    fn go(prefix: &str, v: &Value, out: &mut Flat) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, v) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    go(&key, v, out);
                }
            }
            _ => {
                out.insert(prefix.to_string(), v.clone());
            }
        }
    }
    let mut out = Flat::new();
    go("", value, &mut out);
    out
}

pub fn unflatten(flat: &Flat) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("config keys cannot be both leaf and table");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

pub fn read_file(path: &Path) -> Result<Flat, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingFile(path.to_path_buf()),
        _ => CliError::Runtime(format!("reading {}: {e}", path.display())),
    })?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let json = serde_json::to_value(table).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(flatten(&json))
}

/// Parses `KEY=VALUE`; the value is read as a TOML literal, falling back to a
/// bare string.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {s:?}")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|t| t.get("v").cloned())
        .map(|t| serde_json::to_value(t).expect("TOML values are JSON-representable"))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Command-line overrides collected from typed flags.
#[derive(Default)]
pub struct Overrides(pub Flat);

impl Overrides {
    pub fn put<T: Serialize>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v).expect("serializable flag"));
        }
    }

    pub fn set(&mut self, assignments: &[String]) -> Result<(), CliError> {
        for a in assignments {
            let (k, v) = parse_assignment(a)?;
            self.0.insert(k, v);
        }
        Ok(())
    }
}

/// Layers file values and overrides over `T::default()`. Keys must already
/// exist in the defaults; type errors surface when deserializing.
pub fn merge<T>(file: Option<&Path>, overrides: Overrides) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut base = flatten(&serde_json::to_value(T::default()).expect("defaults serialize"));
    let file_vals = match file {
        Some(p) => read_file(p)?,
        None => Flat::new(),
    };
    for (k, v) in file_vals.into_iter().chain(overrides.0) {
        if !base.contains_key(&k) {
            return Err(CliError::Config(format!("unknown config key {k:?}")));
        }
        base.insert(k, v);
    }
    serde_json::from_value(unflatten(&base)).map_err(|e| CliError::Config(e.to_string()))
}

/// Absolute form of an input path; fails with the missing-file error.
pub fn resolve_input(path: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(path).map_err(|_| CliError::MissingFile(path.to_path_buf()))
}
