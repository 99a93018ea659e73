//! Line-based `key = value` configuration.
//!
//! `#` starts a comment, keys are dotted, values are unquoted strings
//! (surrounding double quotes are stripped), arrays are comma-separated.
//! Unknown keys are errors; every optional key has a default that is echoed
//! in the effective configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::domaingrid::DomainShape;
use crate::psilang::{parse, Expr};
use crate::solver::{NewtonOptions, ProblemSpec};
use crate::verify::BatteryOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key(s): {}", .0.join(", "))]
    UnknownKey(Vec<String>),
    #[error("missing required key(s): {}", .0.join(", "))]
    MissingKey(Vec<String>),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

/// (key, default). `None` marks required keys; domain parameters are
/// required or rejected depending on `domain.kind`.
const KEYS: &[(&str, Option<&str>)] = &[
    ("n", None),
    ("domain.kind", None),
    ("domain.r0", None),
    ("domain.a", None),
    ("domain.b", None),
    ("domain.c", None),
    ("psi", None),
    ("psi_lower", Some("")),
    ("subsolution", Some("")),
    ("h", Some("0.03125")),
    ("eps.schedule", Some("auto")),
    ("newton.tol", Some("1e-10")),
    ("newton.max_iter", Some("50")),
    ("newton.min_step", Some("0.0009765625")),
    ("newton.include_gs", Some("true")),
    ("radial.steps", Some("4096")),
    ("radial.tol", Some("1e-12")),
    ("validate.samples", Some("4096")),
    ("validate.seed", Some("0")),
    ("output.dir", Some(".")),
    ("output.prefix", Some("etacurv")),
    ("output.svg", Some("false")),
    ("props.seed", Some("42")),
    ("props.samples", Some("10000")),
    ("props.dims", Some("2, 3, 4, 5, 6")),
];

const DOMAIN_PARAMS: &[&str] = &["domain.r0", "domain.a", "domain.b", "domain.c"];

fn domain_params(kind: &str) -> Option<&'static [&'static str]> {
    match kind {
        "ball" => Some(&["domain.r0"]),
        "ellipse" => Some(&["domain.a", "domain.b"]),
        "ellipsoid" => Some(&["domain.a", "domain.b", "domain.c"]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub prefix: String,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialOptions {
    pub steps: usize,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct Config {
    /// Effective values, including defaults.
    values: BTreeMap<String, String>,
    pub spec: ProblemSpec,
    pub output: OutputOptions,
    pub radial: RadialOptions,
    pub battery: BatteryOptions,
    pub validate_samples: usize,
    pub validate_seed: u64,
}

/// Raw key/value pairs with their line numbers.
pub fn parse_document(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Parse { line, message: format!("expected 'key = value', got '{body}'") });
        };
        let key = k.trim();
        let valid = !key.is_empty()
            && key.split('.').all(|part| {
                !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            });
        if !valid {
            return Err(ConfigError::Parse { line, message: format!("malformed key '{key}'") });
        }
        let mut value = v.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        } else if value.contains('"') {
            return Err(ConfigError::Parse { line, message: "unbalanced quote".into() });
        }
        if let Some(prev) = out.iter().find(|e| e.1 == key) {
            return Err(ConfigError::Parse { line, message: format!("duplicate key '{key}' (first on line {})", prev.0) });
        }
        out.push((line, key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Comma-separated list of floats.
pub fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>, ConfigError> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| invalid(key, format!("cannot parse '{s}'"))))
        .collect()
}

fn invalid(key: &str, message: String) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message }
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, ConfigError> {
    let s = &map[key];
    s.parse::<T>().map_err(|_| invalid(key, format!("cannot parse '{s}'")))
}

fn expr(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Expr>, ConfigError> {
    let s = map[key].trim();
    if s.is_empty() {
        return Ok(None);
    }
    parse(s).map(Some).map_err(|e| invalid(key, e.to_string()))
}

impl Config {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let entries = parse_document(text)?;
        let mut map = BTreeMap::new();
        let mut unknown = Vec::new();
        for (_, k, v) in entries {
            if KEYS.iter().any(|(name, _)| *name == k) {
                map.insert(k, v);
            } else {
                unknown.push(k);
            }
        }
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKey(unknown));
        }
        Self::from_map(map)
    }

    /// Applies `key = value` overrides (command-line flags) and rebuilds.
    pub fn with_overrides(&self, overrides: &[(&str, String)]) -> Result<Self, ConfigError> {
        let mut map = self.values.clone();
        for (k, v) in overrides {
            if !KEYS.iter().any(|(name, _)| name == k) {
                return Err(ConfigError::UnknownKey(vec![k.to_string()]));
            }
            map.insert(k.to_string(), v.clone());
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut missing: Vec<String> = KEYS
            .iter()
            .filter(|(k, d)| d.is_none() && !DOMAIN_PARAMS.contains(k) && !map.contains_key(*k))
            .map(|(k, _)| k.to_string())
            .collect();
        let kind = map.get("domain.kind").cloned();
        if let Some(kind) = &kind {
            let Some(params) = domain_params(kind) else {
                return Err(invalid("domain.kind", format!("expected ball, ellipse or ellipsoid, got '{kind}'")));
            };
            missing.extend(params.iter().filter(|p| !map.contains_key(**p)).map(|p| p.to_string()));
            let extra: Vec<String> = DOMAIN_PARAMS
                .iter()
                .filter(|p| !params.contains(p) && map.contains_key(**p))
                .map(|p| format!("{p} (not a parameter of kind {kind})"))
                .collect();
            if !extra.is_empty() {
                return Err(ConfigError::UnknownKey(extra));
            }
        }
        if !missing.is_empty() {
            return Err(ConfigError::MissingKey(missing));
        }
        for (k, d) in KEYS {
            if let Some(d) = d {
                map.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }

        let n: usize = get(&map, "n")?;
        let shape = match kind.as_deref().unwrap_or_default() {
            "ball" => DomainShape::ball(n, get(&map, "domain.r0")?),
            "ellipse" => DomainShape::ellipse(get(&map, "domain.a")?, get(&map, "domain.b")?),
            _ => DomainShape::ellipsoid(get(&map, "domain.a")?, get(&map, "domain.b")?, get(&map, "domain.c")?),
        }
        .map_err(|e| invalid("domain", e.to_string()))?;
        if shape.dim() != n {
            return Err(invalid("n", format!("{} domain is {}-dimensional", shape.kind(), shape.dim())));
        }
        let psi = expr(&map, "psi")?.ok_or_else(|| invalid("psi", "empty expression".into()))?;
        let mut spec = ProblemSpec::new(shape, psi, get(&map, "h")?);
        spec.psi_lower = expr(&map, "psi_lower")?;
        spec.subsolution = expr(&map, "subsolution")?;
        let sched = map["eps.schedule"].trim().to_string();
        if sched != "auto" {
            spec.eps_schedule = Some(parse_list("eps.schedule", &sched)?);
        }
        let include_gs: bool = get(&map, "newton.include_gs")?;
        spec.newton = NewtonOptions {
            tol_residual: get(&map, "newton.tol")?,
            max_iter: get(&map, "newton.max_iter")?,
            min_step: get(&map, "newton.min_step")?,
            include_gs,
            ..NewtonOptions::default()
        };
        spec.validate().map_err(|e| invalid("problem", e.to_string()))?;

        let output = OutputOptions {
            dir: PathBuf::from(&map["output.dir"]),
            prefix: map["output.prefix"].clone(),
            svg: get(&map, "output.svg")?,
        };
        if output.prefix.is_empty() || output.prefix.contains(['/', '\\']) {
            return Err(invalid("output.prefix", "must be a non-empty file name".into()));
        }
        let radial = RadialOptions { steps: get(&map, "radial.steps")?, tol: get(&map, "radial.tol")? };
        let battery = battery_from(&map)?;
        Ok(Config {
            validate_samples: get(&map, "validate.samples")?,
            validate_seed: get(&map, "validate.seed")?,
            values: map,
            spec,
            output,
            radial,
            battery,
        })
    }

    /// Effective configuration, one `key = value` per line in key order; it
    /// parses back to the same configuration.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn output_path(&self, suffix: &str) -> PathBuf {
        self.output.dir.join(format!("{}.{suffix}", self.output.prefix))
    }
}

fn battery_from(map: &BTreeMap<String, String>) -> Result<BatteryOptions, ConfigError> {
    let dims: Vec<usize> = parse_list("props.dims", &map["props.dims"])?;
    if dims.is_empty() || dims.iter().any(|&d| d < 2) {
        return Err(invalid("props.dims", "dimensions must be >= 2".into()));
    }
    Ok(BatteryOptions {
        seed: get(map, "props.seed")?,
        samples: get(map, "props.samples")?,
        dims,
        mutate_fgrad: false,
    })
}

/// Battery options from the `props.*` defaults overridden by `overrides`;
/// used when `props` runs without a configuration file.
pub fn battery_defaults(overrides: &[(&str, String)]) -> Result<BatteryOptions, ConfigError> {
    let mut map: BTreeMap<String, String> = KEYS
        .iter()
        .filter(|(k, _)| k.starts_with("props."))
        .map(|(k, d)| (k.to_string(), d.unwrap_or_default().to_string()))
        .collect();
    for (k, v) in overrides {
        if !map.contains_key(*k) {
            return Err(ConfigError::UnknownKey(vec![k.to_string()]));
        }
        map.insert(k.to_string(), v.clone());
    }
    battery_from(&map)
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    Config::from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n = 2\ndomain.kind = ball\ndomain.r0 = 0.5\npsi = \"1\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = Config::from_text(MINIMAL).unwrap();
        assert_eq!(c.spec.n, 2);
        assert_eq!(c.spec.h, 0.03125);
        assert!(c.spec.eps_schedule.is_none());
        assert_eq!(c.battery.seed, 42);
        let echo = c.echo();
        assert!(echo.contains("newton.tol = 1e-10\n"));
        assert!(echo.contains("psi = 1\n"));
        // the echo is itself a valid configuration
        let again = Config::from_text(&echo).unwrap();
        assert_eq!(again.echo(), echo);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("psi =", "pssi =");
        match Config::from_text(&text) {
            Err(ConfigError::UnknownKey(k)) => assert_eq!(k, vec!["pssi".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_keys_are_listed() {
        match Config::from_text("n = 2\ndomain.kind = ellipse\ndomain.a = 1\n") {
            Err(ConfigError::MissingKey(k)) => assert_eq!(k, vec!["psi".to_string(), "domain.b".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schedule_list() {
        let c = Config::from_text(&format!("{MINIMAL}eps.schedule = \"1e-1, 1e-2, 1e-3\"\n")).unwrap();
        assert_eq!(c.spec.eps_schedule, Some(vec![1e-1, 1e-2, 1e-3]));
        let bad = Config::from_text(&format!("{MINIMAL}eps.schedule = 1e-3, 1e-2\n"));
        assert!(matches!(bad, Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match Config::from_text("# header\nn = 2\nthis line is wrong\n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Config::from_text("n = 2\nn = 3\n"), Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn comments_and_overrides() {
        let c = Config::from_text(&format!("# comment\n{MINIMAL}h = 0.0625 # coarse\n")).unwrap();
        assert_eq!(c.spec.h, 0.0625);
        let d = c.with_overrides(&[("output.dir", "/tmp/x".into())]).unwrap();
        assert_eq!(d.output_path("solution.txt"), PathBuf::from("/tmp/x/etacurv.solution.txt"));
        assert!(c.with_overrides(&[("nope", "1".into())]).is_err());
    }

    #[test]
    fn domain_parameters_follow_the_kind() {
        let text = MINIMAL.replace("domain.r0 = 0.5", "domain.r0 = 0.5\ndomain.c = 1");
        assert!(matches!(Config::from_text(&text), Err(ConfigError::UnknownKey(_))));
        let text = MINIMAL.replace("n = 2", "n = 3");
        assert_eq!(Config::from_text(&text).unwrap().spec.n, 3);
        let text = "n = 3\ndomain.kind = ellipse\ndomain.a = 1\ndomain.b = 2\npsi = 1\n";
        assert!(matches!(Config::from_text(text), Err(ConfigError::Invalid { .. })));
    }
}
