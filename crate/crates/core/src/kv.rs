//! Plain-text `key = value` configuration files.
//!
//! Lines starting with `#` are comments, blank lines are ignored. Vector values
//! are comma separated (`sim.gravity_dir = 0, 0, -1`). Every key must be
//! consumed by some reader; leftovers are reported by [`KvMap::finish`] so that
//! typos surface as errors instead of silently falling back to defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn take_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => parse_list(&v)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("`{key}`: cannot parse list `{v}`"))),
        }
    }

    pub fn set_vec3(&mut self, key: &str, slot: &mut Vector3<f64>) -> Result<()> {
        if let Some(v) = self.take_list(key)? {
            if v.len() != 3 {
                return Err(Error::Config(format!("`{key}`: expected 3 values")));
            }
            *slot = Vector3::new(v[0], v[1], v[2]);
        }
        Ok(())
    }

    /// Errors if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.entries.keys().cloned().collect();
            Err(Error::Config(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

pub fn parse_list(v: &str) -> Option<Vec<f64>> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect::<Option<Vec<_>>>()
}

pub(crate) fn write_f64(out: &mut String, key: &str, v: f64) {
    let _ = writeln!(out, "{key} = {v:?}");
}

pub(crate) fn write_vec3(out: &mut String, key: &str, v: &Vector3<f64>) {
    let _ = writeln!(out, "{key} = {:?}, {:?}, {:?}", v.x, v.y, v.z);
}

pub(crate) fn write_display<T: std::fmt::Display>(out: &mut String, key: &str, v: T) {
    let _ = writeln!(out, "{key} = {v}");
}
