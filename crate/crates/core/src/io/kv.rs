//! `key = value` text files used for configs, manifests and metadata.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected 'key = value', got '{line}'", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::format(format!("line {}: empty key", lineno + 1)));
            }
            kv.set(key, value.trim());
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Inserts or replaces, keeping first-insertion order.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::format(format!("cannot parse value '{v}' for key '{key}'")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::format(format!("missing required key '{key}'")))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|_| Error::format(format!("cannot parse list item '{s}' for key '{key}'")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_query() {
        let kv = KeyValues::parse("# comment\nlambda = 0.05\n\nmethods = tv-block, tv-global\nempty =\n").unwrap();
        assert_eq!(kv.get::<f64>("lambda").unwrap(), Some(0.05));
        assert_eq!(kv.get_list::<String>("methods").unwrap().unwrap(), vec!["tv-block", "tv-global"]);
        assert_eq!(kv.get_list::<f64>("empty").unwrap().unwrap(), Vec::<f64>::new());
        assert!(kv.get::<f64>("missing").unwrap().is_none());
        assert!(kv.require::<f64>("missing").is_err());
        assert!(kv.get::<usize>("lambda").is_err());
        assert!(KeyValues::parse("novalue\n").is_err());
    }

    #[test]
    fn set_replaces_in_place() {
        let mut kv = KeyValues::new();
        kv.set("a", 1);
        kv.set("b", 2);
        kv.set("a", 3);
        assert_eq!(kv.to_text(), "a = 3\nb = 2\n");
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
    }
}
