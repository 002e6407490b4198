//! Flag/config-file merging and the resolved run configuration.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Keys handled by the top-level parser rather than a subcommand.
pub const GLOBAL_KEYS: [&str; 4] = ["subcommand", "version", "seed", "threads"];

pub fn read_overrides(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::config(format!("{} must hold a JSON object", path.display()))),
        Err(e) => Err(CliError::config(format!("{}: {e}", path.display()))),
    }
}

/// Replaces fields of `args` with the same-named keys of `overrides`.
pub fn apply<T: Serialize + DeserializeOwned>(args: T, overrides: &Map<String, Value>) -> Result<T, CliError> {
    let Value::Object(mut fields) = serde_json::to_value(&args).map_err(|e| CliError::config(e.to_string()))? else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in overrides {
        if GLOBAL_KEYS.contains(&key.as_str()) {
            continue;
        }
        if !fields.contains_key(key) {
            return Err(CliError::config(format!("unknown config key {key:?}")));
        }
        fields.insert(key.clone(), value.clone());
    }
    serde_json::from_value(Value::Object(fields)).map_err(|e| CliError::config(e.to_string()))
}

#[derive(Serialize)]
pub struct RunConfig<'a, T: Serialize> {
    pub subcommand: &'a str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub args: &'a T,
}
