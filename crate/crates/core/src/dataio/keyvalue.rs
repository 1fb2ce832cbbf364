//! Line-oriented `key=value` files used for configs and run manifests.

use std::collections::BTreeMap;

use crate::error::Location;
use crate::{Error, Result};

/// Parsed key/value pairs with the line each key came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|&(_, l)| l)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the value of `key` with `FromStr`, reporting the key's line on failure.
    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((value, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        value
            .parse()
            .map(Some)
            .map_err(|_| Error::parse(Location::Line(*line), format!("invalid value '{value}' for {key}")))
    }
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are skipped;
/// whitespace around keys and values is trimmed. Duplicate keys are errors.
pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut kv = KeyValues::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::parse(Location::Line(line), format!("expected key=value, found '{trimmed}'")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || "_.-".contains(c)) {
            return Err(Error::parse(Location::Line(line), format!("invalid key '{key}'")));
        }
        if let Some((_, first)) = kv.entries.get(key) {
            return Err(Error::parse(
                Location::Line(line),
                format!("duplicate key '{key}' (first on line {first})"),
            ));
        }
        kv.entries.insert(key.to_string(), (value.trim().to_string(), line));
    }
    Ok(kv)
}

/// Formats pairs in the order given, one per line.
pub fn format_key_values<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{}={}\n", k.as_ref(), v.as_ref()))
        .collect()
}
