//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names (`alpha-rule`, `deltas`, ...). Blank lines
//! and lines starting with `#` are skipped. A key that no subcommand knows
//! is rejected so typos do not silently fall back to defaults.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use kirchhoff_core::{Error, Result};

const KNOWN_KEYS: [&str; 9] = ["alpha-rule", "deltas", "trials", "seed", "n", "m", "out", "delta", "alpha"];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    entries: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Argument(format!("config line {}: expected key=value, got `{line}`", lineno + 1)));
            };
            let key = key.trim().trim_start_matches("--");
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Argument(format!("config line {}: unknown key `{key}`", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Argument(format!("config line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse().map_err(|_| Error::Argument(format!("config key `{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Argument(format!("config key `{key}`: cannot parse `{s}`"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

/// Command-line value, else config value, else default.
pub fn pick<T: FromStr>(cli: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T> {
    match cli {
        Some(v) => Ok(v),
        None => Ok(file.get(key)?.unwrap_or(default)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let c = ConfigFile::parse("# sweep\nalpha-rule = discrepancy:1.5\n\ndeltas = 1e-2, 1e-3 1e-4\ntrials=4\n").unwrap();
        assert_eq!(c.raw("alpha-rule"), Some("discrepancy:1.5"));
        assert_eq!(c.list::<f64>("deltas").unwrap(), Some(vec![1e-2, 1e-3, 1e-4]));
        assert_eq!(c.get::<usize>("trials").unwrap(), Some(4));
        assert_eq!(c.get::<usize>("seed").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(ConfigFile::parse("trails = 3").is_err());
        assert!(ConfigFile::parse("seed = 1\nseed = 2").is_err());
        assert!(ConfigFile::parse("seed 1").is_err());
        assert!(ConfigFile::parse("seed = x").unwrap().get::<u64>("seed").is_err());
    }

    #[test]
    fn command_line_wins() {
        let c = ConfigFile::parse("trials = 4").unwrap();
        assert_eq!(pick(Some(9), &c, "trials", 1).unwrap(), 9);
        assert_eq!(pick(None, &c, "trials", 1).unwrap(), 4);
        assert_eq!(pick(None, &ConfigFile::default(), "trials", 1).unwrap(), 1);
    }
}
