//! Plain-text `key = value` configuration and flag/config/default resolution.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
/// Keys use the long flag names, e.g. `mesh = 10000`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`, got `{}`", i + 1, raw.trim())))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Usage(format!("config line {}: invalid key `{key}`", i + 1)));
        }
        if value.is_empty() {
            return Err(CliError::Usage(format!("config line {}: missing value for `{key}`", i + 1)));
        }
        map.insert(key.replace('_', "-"), value.to_string());
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Resolves each parameter from its flag, then the config, then a default,
/// and records the effective value.
pub struct Params {
    config: BTreeMap<String, String>,
    pub effective: BTreeMap<String, Value>,
}

impl Params {
    pub fn new(config: BTreeMap<String, String>) -> Self {
        Self { config, effective: BTreeMap::new() }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Serialize,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.config.get(key) {
                Some(text) => text
                    .parse()
                    .map_err(|_| CliError::Usage(format!("config value `{text}` for `{key}` does not parse")))?,
                None => default,
            },
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Comma-separated list parameter.
    pub fn get_list<T>(&mut self, key: &str, flag: Option<Vec<T>>, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T: FromStr + Serialize,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.config.get(key) {
                Some(text) => text
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<T>, _>>()
                    .map_err(|_| CliError::Usage(format!("config list `{text}` for `{key}` does not parse")))?,
                None => default,
            },
        };
        self.record(key, &value);
        Ok(value)
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let json = serde_json::to_value(value).unwrap_or(Value::Null);
        self.effective.insert(key.to_string(), json);
    }
}
