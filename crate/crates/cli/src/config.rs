//! Effective run configuration: flags > config file > built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use isoq_core::expansion::CurvatureInputs;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Text,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "case",
    "n",
    "n_min",
    "n_max",
    "rmax",
    "smax",
    "nr",
    "ns",
    "tol",
    "far_field_levels",
    "h2",
    "rninj2",
    "wbar2",
    "rnn2",
    "seed",
    "format",
    "fuzz",
    "exploratory",
    "out",
    "csv",
    "svg",
    "json",
    "report",
];

/// Flat `key = value` file. Blank lines and `#` comments are skipped;
/// dashes in keys are read as underscores.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text)?;
        cfg.path = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected `key = value`", lineno + 1))?;
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("config line {}: unknown key '{key}'", lineno + 1));
            }
            entries.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(ConfigFile {
            path: None,
            entries,
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| format!("config key '{key}': {e}"))
            })
            .transpose()
    }
}

/// Resolves one setting by precedence.
pub fn pick<T: FromStr>(
    flag: Option<T>,
    file: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    Ok(match flag {
        Some(v) => v,
        None => file.get(key)?.unwrap_or(default),
    })
}

pub fn pick_opt<T: FromStr>(
    flag: Option<T>,
    file: &ConfigFile,
    key: &str,
) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

/// The configuration actually used, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub config_file: Option<PathBuf>,
    pub case: Option<String>,
    pub n: Option<u32>,
    pub n_min: u32,
    pub n_max: u32,
    pub rmax: f64,
    pub smax: f64,
    pub nr: usize,
    pub ns: usize,
    pub tol: f64,
    pub far_field_levels: u32,
    pub curvature: CurvatureInputs,
    pub seed: u64,
    pub format: Format,
    pub fuzz: Option<f64>,
    pub exploratory: bool,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_min > self.n_max {
            return Err(format!(
                "n_min = {} exceeds n_max = {}",
                self.n_min, self.n_max
            ));
        }
        for (name, v) in [("tol", self.tol), ("rmax", self.rmax), ("smax", self.smax)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(eps) = self.fuzz {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(format!("fuzz epsilon must be positive, got {eps}"));
            }
        }
        let c = &self.curvature;
        for (name, v) in [("h2", c.h2), ("rninj2", c.rninj2), ("wbar2", c.wbar2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!(
                    "{name} is a squared norm and must be >= 0, got {v}"
                ));
            }
        }
        if !c.rnn2.is_finite() {
            return Err("rnn2 must be finite".into());
        }
        Ok(())
    }
}
