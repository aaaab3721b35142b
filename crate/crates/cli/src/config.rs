//! JSON study configuration: a flat object with global keys and one section per study.
//! Command-line flags are merged over the file before any value is read.

use std::collections::BTreeSet;
use std::fmt;

use serde_json::{Map, Value};

/// A configuration problem; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

pub const GLOBAL_KEYS: &[&str] = &["domain", "domain_file", "circle_segments", "theta", "out", "seed"];
pub const STUDIES: &[&str] = &["eig", "exhaust", "decay", "weyl", "torsion", "blowup", "perturb", "inradius"];

/// Parses a config file and rejects unknown top-level keys.
pub fn parse_root(text: &str) -> ConfigResult<Map<String, Value>> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| ConfigError(format!("config: malformed JSON at line {}, column {}: {e}", e.line(), e.column())))?;
    let Value::Object(map) = v else {
        return Err(ConfigError("config: top level must be an object".into()));
    };
    for (k, v) in &map {
        if STUDIES.contains(&k.as_str()) {
            if !v.is_object() {
                return Err(ConfigError(format!("config key `{k}`: expected an object")));
            }
        } else if !GLOBAL_KEYS.contains(&k.as_str()) {
            return Err(ConfigError(format!("config key `{k}`: unknown key")));
        }
    }
    Ok(map)
}

/// Values of one section with typed, path-reporting accessors.
pub struct Section {
    path: String,
    map: Map<String, Value>,
    known: BTreeSet<&'static str>,
}

impl Section {
    pub fn new(path: &str, map: Map<String, Value>) -> Self {
        Section { path: path.to_string(), map, known: BTreeSet::new() }
    }

    /// Inserts a command-line value, replacing the file value.
    pub fn set(&mut self, key: &str, v: Option<Value>) {
        if let Some(v) = v {
            self.map.insert(key.to_string(), v);
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn raw(&mut self, k: &'static str) -> Option<&Value> {
        self.known.insert(k);
        self.map.get(k)
    }

    pub fn f64(&mut self, k: &'static str, default: f64) -> ConfigResult<f64> {
        let key = self.key(k);
        match self.raw(k) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ConfigError(format!("config key `{key}`: expected a number, got {v}"))),
        }
    }

    pub fn positive(&mut self, k: &'static str, default: f64) -> ConfigResult<f64> {
        let v = self.f64(k, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(ConfigError(format!("config key `{}`: must be positive, got {v}", self.key(k))))
        }
    }

    pub fn usize(&mut self, k: &'static str, default: usize) -> ConfigResult<usize> {
        let key = self.key(k);
        match self.raw(k) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| ConfigError(format!("config key `{key}`: expected a non-negative integer, got {v}"))),
        }
    }

    pub fn bool(&mut self, k: &'static str, default: bool) -> ConfigResult<bool> {
        let key = self.key(k);
        match self.raw(k) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| ConfigError(format!("config key `{key}`: expected true or false, got {v}"))),
        }
    }

    pub fn string(&mut self, k: &'static str) -> ConfigResult<Option<String>> {
        let key = self.key(k);
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(ConfigError(format!("config key `{key}`: expected a string, got {v}"))),
        }
    }

    /// A list of numbers; a single number is accepted as a one-element list.
    pub fn f64_list(&mut self, k: &'static str, default: &[f64]) -> ConfigResult<Vec<f64>> {
        let key = self.key(k);
        let bad = |v: &Value| ConfigError(format!("config key `{key}`: expected a list of numbers, got {v}"));
        match self.raw(k) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) if !a.is_empty() => a.iter().map(|x| x.as_f64().ok_or_else(|| bad(x))).collect(),
            Some(v) => v.as_f64().map(|x| vec![x]).ok_or_else(|| bad(v)),
        }
    }

    pub fn usize_list(&mut self, k: &'static str, default: &[usize]) -> ConfigResult<Vec<usize>> {
        let key = self.key(k);
        let bad = |v: &Value| ConfigError(format!("config key `{key}`: expected a list of non-negative integers, got {v}"));
        match self.raw(k) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) if !a.is_empty() => {
                a.iter().map(|x| x.as_u64().map(|n| n as usize).ok_or_else(|| bad(x))).collect()
            }
            Some(v) => v.as_u64().map(|x| vec![x as usize]).ok_or_else(|| bad(v)),
        }
    }

    /// Fails on keys that no accessor asked for.
    pub fn finish(&self) -> ConfigResult<()> {
        match self.map.keys().find(|k| !self.known.contains(k.as_str())) {
            Some(k) => Err(ConfigError(format!("config key `{}`: unknown key", self.key(k)))),
            None => Ok(()),
        }
    }
}

/// Checks that a schedule is strictly monotone in the given direction.
pub fn monotone(path: &str, v: &[f64], increasing: bool) -> ConfigResult<()> {
    let ok = v.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    if ok {
        Ok(())
    } else {
        let dir = if increasing { "increasing" } else { "decreasing" };
        Err(ConfigError(format!("config key `{path}`: schedule {v:?} must be strictly {dir}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_and_typed_keys() {
        let root = parse_root(r#"{"domain": "hersch", "eig": {"h": 0.1, "bogus": 1}}"#).unwrap();
        let mut s = Section::new("eig", root["eig"].as_object().unwrap().clone());
        assert_eq!(s.f64("h", 0.5).unwrap(), 0.1);
        let err = s.finish().unwrap_err().0;
        assert!(err.contains("`eig.bogus`"), "{err}");

        let mut s = Section::new("eig", Map::new());
        s.set("k", Some(Value::from("three")));
        assert!(s.usize("k", 1).unwrap_err().0.contains("`eig.k`"));
        assert!(parse_root(r#"{"nope": 1}"#).unwrap_err().0.contains("`nope`"));
        assert!(parse_root("{").is_err());
        assert!(monotone("exhaust.R", &[4.0, 3.0], true).is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut s = Section::new("perturb", parse_root(r#"{"perturb": {"eps": [0.1]}}"#).unwrap()["perturb"].as_object().unwrap().clone());
        s.set("eps", Some(serde_json::json!([0.05, 0.025])));
        assert_eq!(s.f64_list("eps", &[]).unwrap(), vec![0.05, 0.025]);
        assert_eq!(s.f64_list("missing", &[1.0]).unwrap(), vec![1.0]);
    }
}
