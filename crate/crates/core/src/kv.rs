//! Flat `key=value` configuration files. Blank lines and `#` comments are
//! ignored; duplicate keys are an error.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        Ok(KvFile { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for key `{key}`"))),
    }
}

pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KvFile::parse("# c\n a = 1 \n\nb=x,y\n").unwrap();
        let v: Vec<_> = kv.iter().collect();
        assert_eq!(v, vec![("a", "1"), ("b", "x,y")]);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KvFile::parse("a=1\na=2").is_err());
        assert!(KvFile::parse("novalue").is_err());
        assert!(KvFile::parse("=3").is_err());
    }

    #[test]
    fn list_and_bool() {
        assert_eq!(parse_list::<usize>("k", "1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_list::<usize>("k", "").unwrap().is_empty());
        assert!(parse_bool("k", "yes").unwrap());
        assert!(parse_bool("k", "maybe").is_err());
    }
}
