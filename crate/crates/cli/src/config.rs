//! Line-oriented `key = value` settings.
//!
//! Blank lines and lines starting with `#` are skipped. Keys are the long
//! flag names without dashes. Flags given on the command line replace the
//! file's values.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Marks an error as bad input (exit code 2).
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidInput(msg.into()).into()
}

pub const KEYS: &[&str] = &[
    "command",
    "weight",
    "phi",
    "psi",
    "radii",
    "tol",
    "seed",
    "out",
    "z",
    "w",
    "p",
    "from",
    "grid",
    "extent",
    "resolution",
    "angular-samples",
    "route",
    "s-grid",
    "eps",
    "mc-samples",
    "only",
];

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Every value read, defaults included, for the provenance header.
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Settings {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut s = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("config line {}: expected key = value", i + 1)))?;
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        if !KEYS.contains(&key) {
            return Err(invalid(format!("unknown setting `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The value of `key`, or `default`; either way it is recorded.
    pub fn text(&self, key: &str, default: Option<&str>) -> Option<String> {
        let v = self.raw(key).or(default)?.to_string();
        self.resolved.borrow_mut().insert(key.to_string(), v.clone());
        Some(v)
    }

    pub fn parsed<T>(
        &self,
        key: &str,
        default: Option<&str>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> anyhow::Result<Option<T>> {
        match self.text(key, default) {
            Some(v) => parse(&v).map(Some).map_err(|e| invalid(format!("--{key} {v}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn get<T: FromStr + fmt::Display>(&self, key: &str, default: T) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        let d = default.to_string();
        let v = self.parsed(key, Some(&d), |s| s.parse::<T>().map_err(|e| e.to_string()))?;
        Ok(v.expect("default given"))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.parsed(key, None, |s| s.parse::<T>().map_err(|e| e.to_string()))
    }

    /// Resolved settings as `key = value` lines.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let mut all = self.resolved.borrow().clone();
        for (k, v) in &self.values {
            all.entry(k.clone()).or_insert_with(|| v.clone());
        }
        all.into_iter().collect()
    }
}

/// Comma-separated floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_records() {
        let s = Settings::parse("# run\nweight = weight A=1 alpha=1\n\nradii = 0.9, 0.95\n").unwrap();
        assert_eq!(s.raw("weight"), Some("weight A=1 alpha=1"));
        let r = s.parsed("radii", None, parse_list).unwrap().unwrap();
        assert_eq!(r, vec![0.9, 0.95]);
        assert_eq!(s.get("tol", 1e-12).unwrap(), 1e-12);
        let p = s.provenance();
        assert!(p.iter().any(|(k, v)| k == "tol" && v == "0.000000000001"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(Settings::parse("colour = red").is_err());
        assert!(Settings::parse("weight").is_err());
    }
}
