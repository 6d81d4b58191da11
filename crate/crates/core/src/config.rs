//! Line-oriented configuration documents shared by geometry, material,
//! phantom and run files.
//!
//! ```text
//! elastoscan-geometry v1
//! # comment
//! length_x = 0.30
//! dirichlet mount_w = 0.0 0.15 0.005 0.01
//! ```
//!
//! The first non-blank line is the versioned header `elastoscan-<kind> v<N>`.
//! Every other line is `key = value` or `<section> <name> = value`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub section: Option<String>,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub kind: String,
    pub version: u32,
    pub entries: Vec<Entry>,
}

impl Document {
    pub fn new(kind: &str, version: u32) -> Self {
        Self {
            kind: kind.to_string(),
            version,
            entries: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, strip_comment(l).trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty document".into(),
        })?;
        let (kind, version) = parse_header(header).ok_or_else(|| Error::Parse {
            line: hline,
            message: format!("expected `elastoscan-<kind> v<N>` header, found `{header}`"),
        })?;
        let mut entries = Vec::new();
        for (line, text) in lines {
            let (lhs, rhs) = text.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, found `{text}`"),
            })?;
            let words: Vec<&str> = lhs.split_whitespace().collect();
            let (section, key) = match words.as_slice() {
                [key] => (None, key.to_string()),
                [section, name] => (Some(section.to_string()), name.to_string()),
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("malformed key `{}`", lhs.trim()),
                    })
                }
            };
            entries.push(Entry {
                line,
                section,
                key,
                value: rhs.trim().to_string(),
            });
        }
        Ok(Self {
            kind,
            version,
            entries,
        })
    }

    pub fn expect_kind(&self, kind: &str, version: u32) -> Result<()> {
        if self.kind != kind || self.version != version {
            return Err(Error::Schema(format!(
                "expected `elastoscan-{kind} v{version}`, found `elastoscan-{} v{}`",
                self.kind, self.version
            )));
        }
        Ok(())
    }

    pub fn push(&mut self, section: Option<&str>, key: &str, value: impl Into<String>) {
        self.entries.push(Entry {
            line: 0,
            section: section.map(str::to_string),
            key: key.to_string(),
            value: value.into(),
        });
    }

    /// Plain `key = value` entry (no section).
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| e.section.is_none() && e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key)
            .ok_or_else(|| Error::Schema(format!("missing key `{key}` in {} file", self.kind)))
    }

    pub fn scalar<V: FromStr>(&self, key: &str) -> Result<V> {
        self.require(key)?.parse_one()
    }

    pub fn scalar_or<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        match self.get(key) {
            Some(e) => e.parse_one(),
            None => Ok(default),
        }
    }

    pub fn section<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.section.as_deref() == Some(section))
    }

    /// Rejects keys and sections outside the allowed sets.
    pub fn check_known(&self, keys: &[&str], sections: &[&str]) -> Result<()> {
        for e in &self.entries {
            let ok = match &e.section {
                None => keys.contains(&e.key.as_str()),
                Some(s) => sections.contains(&s.as_str()),
            };
            if !ok {
                return Err(Error::Parse {
                    line: e.line,
                    message: format!(
                        "unknown entry `{}{}`",
                        e.section
                            .as_deref()
                            .map(|s| format!("{s} "))
                            .unwrap_or_default(),
                        e.key
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = format!("elastoscan-{} v{}\n", self.kind, self.version);
        for e in &self.entries {
            match &e.section {
                Some(s) => out.push_str(&format!("{s} {} = {}\n", e.key, e.value)),
                None => out.push_str(&format!("{} = {}\n", e.key, e.value)),
            }
        }
        out
    }

    /// Key/value view of the unsectioned entries.
    pub fn plain_map(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .filter(|e| e.section.is_none())
            .map(|e| (e.key.as_str(), e.value.as_str()))
            .collect()
    }
}

impl Entry {
    pub fn parse_one<V: FromStr>(&self) -> Result<V> {
        self.value.parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("cannot parse `{}` for `{}`", self.value, self.key),
        })
    }

    /// Whitespace or comma separated list.
    pub fn parse_list<V: FromStr>(&self) -> Result<Vec<V>> {
        self.value
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|w| !w.is_empty())
            .map(|w| {
                w.parse().map_err(|_| Error::Parse {
                    line: self.line,
                    message: format!("cannot parse `{w}` in `{}`", self.key),
                })
            })
            .collect()
    }

    pub fn parse_fixed<V: FromStr>(&self, n: usize) -> Result<Vec<V>> {
        let v: Vec<V> = self.parse_list()?;
        if v.len() != n {
            return Err(Error::Parse {
                line: self.line,
                message: format!("`{}` expects {n} values, found {}", self.key, v.len()),
            });
        }
        Ok(v)
    }
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a)
}

fn parse_header(line: &str) -> Option<(String, u32)> {
    let mut words = line.split_whitespace();
    let kind = words.next()?.strip_prefix("elastoscan-")?;
    let version = words.next()?.strip_prefix('v')?.parse().ok()?;
    if words.next().is_some() || kind.is_empty() {
        return None;
    }
    Some((kind.to_string(), version))
}
