//! Flat UTF-8 `key = value` files shared by run configs and scenarios.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may not repeat.
//! Readers consume keys as they go; [`KvMap::finish`] rejects whatever is left.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, (String, usize)>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| parse_error(line, format!("expected 'key = value', found '{trimmed}'")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(parse_error(line, "empty key"));
            }
            let value = value.trim().trim_matches('"').to_string();
            if let Some((_, first)) = entries.get(key) {
                return Err(parse_error(line, format!("duplicate key '{key}' (first set on line {first})")));
            }
            entries.insert(key.to_string(), (value, line));
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), (value.into(), 0));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes and returns every entry whose key starts with `prefix`, with the
    /// prefix stripped.
    pub fn take_prefixed(&mut self, prefix: &str) -> KvMap {
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        let mut out = KvMap::default();
        for k in keys {
            let v = self.entries.remove(&k).expect("key listed above");
            out.entries.insert(k[prefix.len()..].to_string(), v);
        }
        out
    }

    pub fn take_raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| parse_error(line, format!("key '{key}': cannot parse '{v}'"))),
        }
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?.ok_or_else(|| parse_error(0, format!("missing required key '{key}'")))
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| parse_error(line, format!("key '{key}': cannot parse '{s}'"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some((key, (_, line))) => Err(parse_error(line, format!("unknown key '{key}'"))),
        }
    }
}

/// Writer producing the same format, one `key = value` per line, in insertion order.
#[derive(Debug, Default, Clone)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn comment(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.out, "# {text}");
        self
    }

    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.out, "{key} = {value}");
        self
    }

    pub fn put_list<T: std::fmt::Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let joined = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        self.put(key, joined)
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_consumes() {
        let mut m = KvMap::parse("# c\nT = 10\nname = \"x\"\nlist = 1, 2,3\n\n").unwrap();
        assert_eq!(m.require::<usize>("T").unwrap(), 10);
        assert_eq!(m.take_str("name").unwrap(), "x");
        assert_eq!(m.take_list::<u32>("list").unwrap().unwrap(), vec![1, 2, 3]);
        assert!(m.finish().is_ok());
    }

    #[test]
    fn duplicate_names_line() {
        let err = KvMap::parse("a = 1\nb = 2\na = 3\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("'a'"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_and_bad_values() {
        let mut m = KvMap::parse("a = 1\nzz = 2\n").unwrap();
        m.take::<u8>("a").unwrap();
        let err = m.finish().unwrap_err().to_string();
        assert!(err.contains("zz"), "{err}");
        let mut m = KvMap::parse("a = nope\n").unwrap();
        assert!(m.take::<f64>("a").unwrap_err().to_string().contains("'a'"));
        assert!(KvMap::parse("just words\n").is_err());
    }
}
