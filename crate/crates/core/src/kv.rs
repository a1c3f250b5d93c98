//! Flat `key=value` text files: one pair per line, `#` starts a comment.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Fails on any key not in `allowed`.
    pub fn restrict(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key)
            .ok_or_else(|| Error::Config(format!("missing key {key}")))
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.get_str(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value for {key}: {v:?}")))
            })
            .transpose()
    }

    /// Comma-separated list.
    pub fn get_list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        self.get_str(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("invalid entry in {key}: {item:?}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_junk() {
        let kv = KeyValues::parse("# header\nseed = 7\n\nlist=1, 2,3 # trailing\n").unwrap();
        assert_eq!(kv.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(kv.get_list::<u32>("list").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(kv.get::<u64>("missing").unwrap(), None);
        assert!(kv.require_str("missing").is_err());
        assert!(kv.restrict(&["seed"]).is_err());
        assert!(kv.restrict(&["seed", "list"]).is_ok());
        assert!(kv.get::<u64>("list").is_err());
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse("a=1\na=2\n").is_err());
    }
}
