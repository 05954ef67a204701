//! Flat `key.path = value` experiment configuration.
//!
//! The format is a versioned plain-text map: one `key = value` per line,
//! `#` comments, values parsed on demand. Every key read (or defaulted) is
//! recorded so the run manifest can echo the fully resolved configuration,
//! and unknown keys are rejected with their path.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use flatten_core::curve::{default_domain, CurveSpec};
use flatten_core::ifs::{AffineMap1D, WeightedIfs};
use flatten_core::poly::Poly;

/// Schema understood by this binary.
pub const SCHEMA: u64 = 1;

#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.to_string(), message: message.into() }
}

/// Parsed key-value config with resolved-value tracking.
#[derive(Debug, Default)]
pub struct Config {
    raw: BTreeMap<String, String>,
    used: std::cell::RefCell<BTreeSet<String>>,
    resolved: std::cell::RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut raw = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(err(&format!("line {}", lineno + 1), "empty key"));
            }
            if raw.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(err(&key, "duplicate key"));
            }
        }
        let cfg = Config { raw, ..Default::default() };
        let schema = cfg.u64("schema", None)?;
        if schema != SCHEMA {
            return Err(err("schema", format!("unsupported schema {schema}, expected {SCHEMA}")));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn note(&self, key: &str, value: &str) {
        self.used.borrow_mut().insert(key.to_string());
        self.resolved.borrow_mut().insert(key.to_string(), value.to_string());
    }

    fn fetch(&self, key: &str, default: Option<&str>) -> Result<String, ConfigError> {
        match self.raw.get(key) {
            Some(v) => {
                self.note(key, v);
                Ok(v.clone())
            }
            None => match default {
                Some(d) => {
                    self.note(key, d);
                    Ok(d.to_string())
                }
                None => Err(err(key, "missing required key")),
            },
        }
    }

    pub fn str(&self, key: &str, default: Option<&str>) -> Result<String, ConfigError> {
        self.fetch(key, default)
    }

    pub fn u64(&self, key: &str, default: Option<u64>) -> Result<u64, ConfigError> {
        let d = default.map(|v| v.to_string());
        let v = self.fetch(key, d.as_deref())?;
        v.parse().map_err(|_| err(key, format!("`{v}` is not an unsigned integer")))
    }

    pub fn u32(&self, key: &str, default: Option<u32>) -> Result<u32, ConfigError> {
        let v = self.u64(key, default.map(u64::from))?;
        u32::try_from(v).map_err(|_| err(key, format!("{v} does not fit in 32 bits")))
    }

    pub fn f64(&self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        let d = default.map(|v| format!("{v}"));
        let v = self.fetch(key, d.as_deref())?;
        v.parse().map_err(|_| err(key, format!("`{v}` is not a number")))
    }

    pub fn f64_list(&self, key: &str, default: Option<&str>) -> Result<Vec<f64>, ConfigError> {
        let v = self.fetch(key, default)?;
        v.split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>().map_err(|_| err(key, format!("`{f}` is not a number")))
            })
            .collect()
    }

    pub fn u32_list(&self, key: &str, default: Option<&str>) -> Result<Vec<u32>, ConfigError> {
        let v = self.fetch(key, default)?;
        v.split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<u32>().map_err(|_| err(key, format!("`{f}` is not an integer")))
            })
            .collect()
    }

    pub fn has(&self, key: &str) -> bool {
        self.raw.contains_key(key)
    }

    /// All keys present in the file but never read by the run.
    pub fn unknown_keys(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.raw.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }

    /// Fully resolved `key = value` map (defaults included), for the
    /// manifest echo.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }

    // -- domain objects ----------------------------------------------------

    /// The weighted IFS from `ifs.lambdas`, `ifs.translations`,
    /// `ifs.weights` (all required, equal lengths).
    pub fn ifs(&self) -> Result<WeightedIfs, ConfigError> {
        let lambdas = self.f64_list("ifs.lambdas", None)?;
        let ts = self.f64_list("ifs.translations", None)?;
        let weights = self.f64_list("ifs.weights", None)?;
        if ts.len() != lambdas.len() {
            return Err(err(
                "ifs.translations",
                format!("{} entries for {} maps", ts.len(), lambdas.len()),
            ));
        }
        if weights.len() != lambdas.len() {
            return Err(err(
                "ifs.weights",
                format!("{} entries for {} maps", weights.len(), lambdas.len()),
            ));
        }
        let maps = lambdas
            .iter()
            .zip(&ts)
            .map(|(&l, &t)| AffineMap1D::new(l, t))
            .collect();
        WeightedIfs::new(maps, weights).map_err(|e| err("ifs", e.to_string()))
    }

    /// The curve from `curve.kind` (`none` | `moment` | `graph`),
    /// `curve.dim`, `curve.poly.<i>` coefficient lists (ascending degree),
    /// and `curve.domain` (`auto` or `a, b`).
    pub fn curve(&self, ifs: &WeightedIfs) -> Result<Option<CurveSpec>, ConfigError> {
        let kind = self.str("curve.kind", Some("none"))?;
        let domain = |cfg: &Self| -> Result<(f64, f64), ConfigError> {
            let v = cfg.str("curve.domain", Some("auto"))?;
            if v == "auto" {
                return Ok(default_domain(ifs));
            }
            let parts = cfg.f64_list("curve.domain", None)?;
            if parts.len() != 2 || parts[0] >= parts[1] {
                return Err(err("curve.domain", "expected `auto` or `lo, hi` with lo < hi"));
            }
            Ok((parts[0], parts[1]))
        };
        match kind.as_str() {
            "none" => Ok(None),
            "moment" => {
                let d = self.u32("curve.dim", None)? as usize;
                if d < 1 {
                    return Err(err("curve.dim", "must be >= 1"));
                }
                Ok(Some(CurveSpec::moment(d, domain(self)?)))
            }
            "graph" => {
                let mut comps = Vec::new();
                loop {
                    let key = format!("curve.poly.{}", comps.len());
                    if !self.has(&key) {
                        break;
                    }
                    comps.push(Poly::new(self.f64_list(&key, None)?));
                }
                if comps.is_empty() {
                    return Err(err("curve.poly.0", "graph curve needs at least one component"));
                }
                Ok(Some(CurveSpec::graph(comps, domain(self)?)))
            }
            other => Err(err("curve.kind", format!("`{other}` is not none|moment|graph"))),
        }
    }

    /// Validated tau in (0,1).
    pub fn tau(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.f64(key, Some(default))?;
        if !(v > 0.0 && v < 1.0) {
            return Err(err(key, format!("tau {v} must be in (0,1)")));
        }
        Ok(v)
    }

    /// Validated grid step in (0, 1/4].
    pub fn grid_step(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.f64(key, Some(0.25))?;
        if !(v > 0.0 && v <= 0.25) {
            return Err(err(key, format!("grid step {v} must be in (0, 1/4]")));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_defaults() {
        let cfg = Config::parse(
            "schema = 1\nifs.lambdas = 0.5, 0.5\nifs.translations = 0, 0.5\nifs.weights = 0.5, 0.5\n",
        )
        .unwrap();
        let ifs = cfg.ifs().unwrap();
        assert_eq!(ifs.len(), 2);
        assert_eq!(cfg.f64("scan.h", Some(0.25)).unwrap(), 0.25);
        let resolved = cfg.resolved();
        assert_eq!(resolved.get("scan.h").map(String::as_str), Some("0.25"));
    }

    #[test]
    fn missing_weights_named() {
        let cfg = Config::parse(
            "schema = 1\nifs.lambdas = 0.5, 0.5\nifs.translations = 0, 0.5\n",
        )
        .unwrap();
        let e = cfg.ifs().unwrap_err();
        assert_eq!(e.path, "ifs.weights");
    }

    #[test]
    fn schema_required() {
        assert!(Config::parse("x = 1\n").is_err());
        assert!(Config::parse("schema = 2\n").is_err());
    }

    #[test]
    fn unknown_keys_reported() {
        let cfg = Config::parse("schema = 1\nifs.lambdaz = 0.5\n").unwrap();
        assert_eq!(cfg.unknown_keys(), vec!["ifs.lambdaz".to_string()]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = Config::parse("# hi\nschema = 1\n\nseed = 7 # trailing\n").unwrap();
        assert_eq!(cfg.u64("seed", Some(0)).unwrap(), 7);
    }

    #[test]
    fn graph_curve_components() {
        let cfg = Config::parse(
            "schema = 1\nifs.lambdas = 0.5, 0.5\nifs.translations = 0, 0.5\nifs.weights = 0.5, 0.5\n\
             curve.kind = graph\ncurve.poly.0 = 0, 0, 1\ncurve.domain = -0.1, 1.1\n",
        )
        .unwrap();
        let ifs = cfg.ifs().unwrap();
        let curve = cfg.curve(&ifs).unwrap().unwrap();
        assert_eq!(curve.ambient_dim(), 2);
        assert_eq!(curve.domain(), (-0.1, 1.1));
    }
}
