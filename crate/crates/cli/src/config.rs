//! Config assembly: defaults, then the config file, then command-line
//! overrides, then strict deserialization.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Usage or config problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Recursively merges `patch` into `base`. Objects merge key by key; any
/// other value replaces what was there.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads a config document. A run manifest is accepted too: its `config`
/// entry is used, provided it was written by the same subcommand.
pub fn read_document(path: &Path, subcommand: &str) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| err(format!("{} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut map) = doc else {
        return Err(err(format!("{} must hold a JSON object", path.display())));
    };
    if map.contains_key("schema_version") && map.contains_key("config") {
        match map.get("subcommand").and_then(Value::as_str) {
            Some(s) if s == subcommand => {}
            other => {
                return Err(err(format!(
                    "manifest was written by {other:?}, not {subcommand}"
                )))
            }
        }
        return Ok(map.remove("config").expect("checked above"));
    }
    Ok(Value::Object(map))
}

/// Applies `key.path=JSON` to `doc`. A value that does not parse as JSON is
/// taken as a string.
pub fn apply_set(doc: &mut Value, assignment: &str) -> anyhow::Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| err(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    if path.is_empty() {
        return Err(err("--set with an empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = value;
    for key in path.rsplit('.') {
        let mut m = Map::new();
        m.insert(key.to_string(), patch);
        patch = Value::Object(m);
    }
    merge(doc, patch);
    Ok(())
}

/// Sets `mc.seed` when the config has a Monte Carlo section.
pub fn apply_seed(doc: &mut Value, seed: u64) -> bool {
    match doc.get_mut("mc") {
        Some(Value::Object(mc)) => {
            mc.insert("seed".into(), Value::from(seed));
            true
        }
        _ => false,
    }
}

pub struct Sources<'a> {
    pub file: Option<&'a Path>,
    pub sets: &'a [String],
    pub seed: Option<u64>,
}

/// Builds the effective config of type `T`. Unknown keys anywhere are
/// rejected by `T`'s deserializer.
pub fn assemble<T>(subcommand: &str, sources: &Sources) -> anyhow::Result<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut doc = serde_json::to_value(T::default())?;
    if let Some(path) = sources.file {
        merge(&mut doc, read_document(path, subcommand)?);
    }
    for s in sources.sets {
        apply_set(&mut doc, s)?;
    }
    if let Some(seed) = sources.seed {
        if !apply_seed(&mut doc, seed) {
            return Err(err(format!("{subcommand} does not sample; --seed has no effect")));
        }
    }
    serde_json::from_value(doc).map_err(|e| err(e.to_string()))
}
