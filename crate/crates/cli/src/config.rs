//! Experiment configuration files.
//!
//! One experiment per file, TOML syntax:
//!
//! ```toml
//! experiment = "pd-curve"     # optional, must match the command line
//! seed = 1
//! threshold_rule = "max_psucc"
//!
//! [params]
//! kappa = 0.005
//! b = 100
//! lambda_grid = { from = 0.05, to = 0.6, count = 12 }
//!
//! [output]
//! file = "fig1.csv"
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    #[default]
    MaxPsucc,
    MinErrors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Free,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Bernoulli,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reweight {
    None,
    #[default]
    Membership,
    MembershipAndMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: Scale,
}

/// Round to 12 significant digits so generated grids print as typed
/// (0.3, not 0.30000000000000004).
fn snap(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Either an explicit list or an evenly spaced range (endpoints included).
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(Range),
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let v = match self {
            Grid::List(v) => v.clone(),
            Grid::Range(r) => {
                if r.count == 0 {
                    return Err("range needs count >= 1".into());
                }
                if r.scale == Scale::Log && !(r.from > 0.0 && r.to > 0.0) {
                    return Err("log range needs positive end points".into());
                }
                let (lo, hi) = match r.scale {
                    Scale::Linear => (r.from, r.to),
                    Scale::Log => (r.from.ln(), r.to.ln()),
                };
                (0..r.count)
                    .map(|i| {
                        let x = if r.count == 1 { lo } else { lo + (hi - lo) * i as f64 / (r.count - 1) as f64 };
                        let v = match r.scale {
                            Scale::Linear => x,
                            Scale::Log => x.exp(),
                        };
                        snap(v)
                    })
                    .collect()
            }
        };
        if v.is_empty() {
            return Err("grid is empty".into());
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(format!("grid value {x} is not finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub kappa: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub lambda: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub lambda_grid: Option<Grid>,
    pub kappa_grid: Option<Grid>,
    pub mu_grid: Option<Grid>,
    pub population_size: Option<usize>,
    pub iterations: Option<usize>,
    pub seeds: Option<usize>,
    pub psi_rounds: Option<usize>,
    pub reweighting: Option<Reweight>,
    pub init: Option<Init>,
    pub membership: Option<Membership>,
    pub enforce_membership: Option<bool>,
    pub damping: Option<f64>,
    pub tol: Option<f64>,
    /// Graph file for `bp-run`, relative to the config file.
    pub graph: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub file: Option<String>,
    /// Also write a `.plt` manifest naming the data columns.
    #[serde(default)]
    pub manifest: bool,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threshold_rule: Rule,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: Output,
}

/// A parsed config together with its source, for line-numbered messages.
#[derive(Debug, Clone)]
pub struct Source {
    pub config: Config,
    text: String,
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Source {
    pub fn parse(text: &str) -> Result<Source, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map_or(1, |s| line_at(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        Ok(Source { config, text: text.to_string() })
    }

    /// Line of `key` inside `[section]` (top level when `None`); falls back to
    /// the section header, then to line 1.
    pub fn line_of(&self, section: Option<&str>, key: &str) -> usize {
        let mut current: Option<String> = None;
        let mut header = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name.trim().to_string());
                if section == Some(name.trim()) {
                    header = Some(i + 1);
                }
                continue;
            }
            let here = current.as_deref() == section;
            let matches_key = line
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='));
            if here && matches_key {
                return i + 1;
            }
        }
        header.unwrap_or(1)
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.line_of(Some("params"), key), message: format!("params.{key}: {}", message.into()) }
    }

    pub fn top_error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.line_of(None, key), message: format!("{key}: {}", message.into()) }
    }

    /// The config as sorted `key=value` pairs with dotted keys.
    pub fn flatten(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(&self.config).expect("config serializes");
        let mut out = Vec::new();
        flatten_into("", &value, &mut out);
        out
    }
}

fn flatten_into(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) if !t.is_empty() && !is_range(t) => {
            for (k, x) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, x, out);
            }
        }
        toml::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn is_range(t: &toml::Table) -> bool {
    t.contains_key("from") && t.contains_key("to")
}
