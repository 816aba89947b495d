use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A flat `key = value` document. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    entries: BTreeMap<String, String>,
}

impl FromStr for ConfigDoc {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected `key = value`",
                    no + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {}: empty key", no + 1)));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::config(format!(
                    "line {}: duplicate key `{key}`",
                    no + 1
                )));
            }
        }
        Ok(ConfigDoc { entries })
    }
}

impl ConfigDoc {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Rejects keys outside `allowed` and reports missing `required` keys.
    pub fn check_keys(&self, allowed: &[&str], required: &[&str]) -> Result<()> {
        if let Some(k) = self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown key `{k}`")));
        }
        let missing: Vec<&str> = required
            .iter()
            .copied()
            .filter(|k| !self.entries.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            return Err(Error::config(format!(
                "missing required key(s): {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.entries.get(key).map(String::as_str).unwrap_or(default)
    }

    fn parse<T: FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.parse()
            .map_err(|_| Error::config(format!("`{key}`: cannot parse `{raw}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        match self.entries.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Err(Error::config(format!("missing required key `{key}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.entries.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self
            .entries
            .get(key)
            .ok_or_else(|| Error::config(format!("missing required key `{key}`")))?;
        raw.split(',').map(|s| self.parse(key, s.trim())).collect()
    }

    /// Finite real in `(0, ∞)`.
    pub fn positive(&self, key: &str, default: Option<f64>) -> Result<f64> {
        let v = match default {
            Some(d) => self.get_or(key, d)?,
            None => self.get(key)?,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::config(format!("{key} must be positive")));
        }
        Ok(v)
    }

    /// Integer `≥ 1`.
    pub fn count(&self, key: &str, default: Option<usize>) -> Result<usize> {
        let v = match default {
            Some(d) => self.get_or(key, d)?,
            None => self.get(key)?,
        };
        if v == 0 {
            return Err(Error::config(format!("{key} must be at least 1")));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let doc: ConfigDoc =
            "# study\nphi = nonnegative  # reflected\n\nschedule = 0.2, 0.1,0.05\nd=1\n"
                .parse()
                .unwrap();
        assert_eq!(doc.str_or("phi", ""), "nonnegative");
        assert_eq!(doc.list::<f64>("schedule").unwrap(), vec![0.2, 0.1, 0.05]);
        assert_eq!(doc.count("d", None).unwrap(), 1);
        assert_eq!(doc.get_or("seed", 7u64).unwrap(), 7);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!("phi nonnegative".parse::<ConfigDoc>().is_err());
        assert!("a = 1\na = 2".parse::<ConfigDoc>().is_err());
        let doc: ConfigDoc = "epsilon = -1\nextra = 3".parse().unwrap();
        let e = doc.positive("epsilon", None).unwrap_err();
        assert!(e.to_string().contains("epsilon must be positive"));
        let e = doc.check_keys(&["epsilon"], &[]).unwrap_err();
        assert!(e.to_string().contains("unknown key `extra`"));
        let e = doc
            .check_keys(&["epsilon", "extra", "n_paths"], &["n_paths"])
            .unwrap_err();
        assert!(e.to_string().contains("n_paths"));
        assert!(doc.get::<usize>("epsilon").is_err());
    }
}
