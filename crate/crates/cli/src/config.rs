//! Flat `key = value` run configuration.
//!
//! Values resolve as command-line flag, then config file, then built-in default.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::error::CliError;

pub const SEED_ENV: &str = "PHRASECRAFT_SEED";

/// Parses a config file into `key -> (value, line)`. Blank lines and `#` comments
/// are ignored; a later assignment to the same key wins.
pub fn load_config(path: &Path) -> Result<BTreeMap<String, (String, usize)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, (String, usize)>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Data(format!(
                "{}:{}: expected `key = value`, found {raw:?}",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Data(format!("{}:{}: malformed key {key:?}", path.display(), i + 1)));
        }
        out.insert(key.replace('-', "_"), (value.trim().to_string(), i + 1));
    }
    Ok(out)
}

/// Resolves settings for one command and remembers what was resolved, so the
/// values can go into the run manifest.
#[derive(Debug, Default)]
pub struct Settings {
    source: Option<String>,
    file: BTreeMap<String, (String, usize)>,
    used: RefCell<BTreeSet<String>>,
    resolved: RefCell<BTreeMap<String, Value>>,
}

impl Settings {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = config else {
            return Ok(Self::default());
        };
        Ok(Self {
            source: Some(path.display().to_string()),
            file: load_config(path)?,
            ..Default::default()
        })
    }

    pub fn get<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.used.borrow_mut().insert(key.to_string());
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some((raw, line))) => raw.parse().map_err(|e| {
                CliError::Data(format!(
                    "{}:{line}: bad value {raw:?} for {key}: {e}",
                    self.source.as_deref().unwrap_or("config")
                ))
            })?,
            (None, None) => default,
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Flag, then config file, then the `PHRASECRAFT_SEED` environment variable, then 0.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        let from_env = match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
            Err(_) => 0,
        };
        self.get("seed", flag, from_env)
    }

    pub fn bool_flag(&self, key: &str, flag: bool) -> Result<bool, CliError> {
        self.get(key, flag.then_some(true), false)
    }

    /// Numbers and booleans are kept as JSON scalars, everything else as a string.
    pub fn record<T: Display>(&self, key: &str, value: &T) {
        let text = value.to_string();
        let v = match serde_json::from_str::<Value>(&text) {
            Ok(v @ (Value::Number(_) | Value::Bool(_))) => v,
            _ => Value::String(text),
        };
        self.resolved.borrow_mut().insert(key.to_string(), v);
    }

    /// Warns about config keys that no setting asked for.
    pub fn warn_unused(&self) {
        let used = self.used.borrow();
        for (key, (_, line)) in &self.file {
            if !used.contains(key) {
                log::warn!(
                    "{}:{line}: unknown key {key:?} ignored",
                    self.source.as_deref().unwrap_or("config")
                );
            }
        }
    }

    pub fn resolved(&self) -> BTreeMap<String, Value> {
        self.resolved.borrow().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn settings(text: &str) -> Settings {
        Settings {
            source: Some("test.cfg".into()),
            file: parse_config(text, &PathBuf::from("test.cfg")).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let s = settings("");
        assert_eq!(s.get("lr", None, 2e-5).unwrap(), 2e-5);
        assert_eq!(s.get("batch", None, 16usize).unwrap(), 16);
    }

    #[test]
    fn flag_beats_file() {
        let s = settings("lr = 1e-3\n");
        assert_eq!(s.get("lr", Some(2e-5), 0.1).unwrap(), 2e-5);
        assert_eq!(s.get("lr", None, 0.1).unwrap(), 1e-3);
    }

    #[test]
    fn margin_parses() {
        let s = settings("# comment\nmargin = 1.0   # trailing\n\n");
        assert_eq!(s.get("margin", None, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn malformed_line_names_line() {
        let err = parse_config("lr = 1\nthis is wrong\n", &PathBuf::from("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("x.cfg:2"), "{err}");
    }

    #[test]
    fn bad_value_is_data_error() {
        let s = settings("epochs = many\n");
        assert!(matches!(s.get("epochs", None, 1usize), Err(CliError::Data(_))));
    }

    #[test]
    fn dashes_normalize() {
        let s = settings("lr-hold = true\n");
        assert!(s.bool_flag("lr_hold", false).unwrap());
    }
}
