//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may use `-` or
//! `_` interchangeably. Every key must be consumed by the subcommand that
//! reads the file, otherwise [`KvConfig::finish`] reports it.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct KvConfig {
    values: BTreeMap<String, (usize, String)>,
    used: RefCell<BTreeSet<String>>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, found {trimmed:?}"),
            })?;
            let key = normalize(key);
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    message: "empty key".into(),
                });
            }
            let value = value.trim().trim_matches('"').to_string();
            if let Some((first, _)) = values.insert(key.clone(), (line, value)) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key {key:?} (first set on line {first})"),
                });
            }
        }
        Ok(Self {
            values,
            used: RefCell::default(),
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::parse(&text)
            }
        }
    }

    /// Flag value if given, else the config value, else `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.resolve_opt(flag, key)?.unwrap_or(default))
    }

    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let key = normalize(key);
        let from_file = self.values.get(&key);
        if from_file.is_some() {
            self.used.borrow_mut().insert(key.clone());
        }
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|e| Error::Config {
                line: *line,
                message: format!("invalid value {raw:?} for {key}: {e}"),
            }),
        }
    }

    /// Flags for booleans: set if the flag is present or the file says true.
    pub fn resolve_flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.resolve_opt::<bool>(None, key)?.unwrap_or(false))
    }

    /// Fails on keys that no option consumed.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.values.iter().find(|(k, _)| !used.contains(*k)) {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::Config {
                line: *line,
                message: format!("unknown key {key:?}"),
            }),
        }
    }
}
