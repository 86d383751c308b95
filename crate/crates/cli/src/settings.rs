//! Key-value config files and their merge with command-line flags.
//!
//! ```text
//! # comment
//! strategy = pair_mock
//! node_counts = 10, 15
//! ```
//!
//! Keys use the long flag names with `_` for `-`. A flag given on the
//! command line always wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "strategy",
    "strategies",
    "mode",
    "seed",
    "instance_seed",
    "population",
    "generations",
    "early_stop",
    "fallback_to_mock",
    "base_temperature",
    "families",
    "node_counts",
    "instances",
    "runs_per_instance",
    "jobs",
    "base_url",
    "model",
    "timeout_ms",
    "max_retries",
    "max_requeries",
];

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
    source: String,
}

impl KvConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{source}:{}: expected `key = value`", i + 1)))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("{source}:{}: unknown key `{key}`", i + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("{source}:{}: `{key}` given twice", i + 1)));
            }
        }
        Ok(Self { values, source: source.to_string() })
    }

    pub fn optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse().map_err(|e| CliError::Config(format!("{}: bad value `{v}` for `{key}`: {e}", self.source)))
            })
            .transpose()
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values.get(key).map(|v| parse_list(v).map_err(CliError::Config)).transpose()
    }

    /// Flag value if present, else the file's value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn pick_list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get_list(key)?.unwrap_or(default),
        })
    }
}

pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| format!("bad list entry `{s}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let cfg = KvConfig::parse("# grid\nseed = 7\nnode-counts = 10, 15\n\nstrategy=pair_mock\n", "t").unwrap();
        assert_eq!(cfg.pick(None, "seed", 0u64).unwrap(), 7);
        assert_eq!(cfg.pick(Some(3), "seed", 0u64).unwrap(), 3);
        assert_eq!(cfg.pick(None, "population", 16usize).unwrap(), 16);
        assert_eq!(cfg.pick_list(None, "node_counts", vec![25usize]).unwrap(), vec![10, 15]);
        assert_eq!(cfg.pick_list(Some(vec![20usize]), "node_counts", vec![]).unwrap(), vec![20]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(KvConfig::parse("seed 7", "t").is_err());
        assert!(KvConfig::parse("sead = 7", "t").is_err());
        assert!(KvConfig::parse("seed = 1\nseed = 2", "t").is_err());
        let cfg = KvConfig::parse("seed = x", "t").unwrap();
        assert!(cfg.get::<u64>("seed").is_err());
    }
}
