//! Experiment configuration files: TOML on disk, command-line overrides on top.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::DqnConfig;
use crate::envs::{EnvConstants, EnvKind};
use crate::experiments::{ExperimentError, RunConfig};

pub const OUTPUT_ROOT_VAR: &str = "SPARSE_DQN_OUTPUT_ROOT";
pub const WORKERS_VAR: &str = "SPARSE_DQN_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ExperimentError),
}

/// A seed list. Parses `"a..b"` (inclusive), `"a,b,c"`, or a TOML integer array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SeedsRepr", into = "Vec<u64>")]
pub struct Seeds(pub Vec<u64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedsRepr {
    Text(String),
    List(Vec<u64>),
}

impl TryFrom<SeedsRepr> for Seeds {
    type Error = String;

    fn try_from(r: SeedsRepr) -> Result<Self, String> {
        match r {
            SeedsRepr::Text(s) => s.parse(),
            SeedsRepr::List(v) if v.is_empty() => Err("seed list is empty".into()),
            SeedsRepr::List(v) => Ok(Seeds(v)),
        }
    }
}

impl From<Seeds> for Vec<u64> {
    fn from(s: Seeds) -> Self {
        s.0
    }
}

impl FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
        let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if b < a {
                return Err(format!("empty seed range `{s}`"));
            }
            (a..=b).collect()
        } else {
            s.split(',').map(num).collect::<Result<_, _>>()?
        };
        if seeds.is_empty() {
            return Err("seed list is empty".into());
        }
        Ok(Seeds(seeds))
    }
}

impl fmt::Display for Seeds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

fn default_seeds() -> Seeds {
    Seeds(vec![0])
}

fn default_log_interval() -> u64 {
    crate::agent::DEFAULT_LOG_INTERVAL
}

/// Output root from the environment, or `output`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("output"))
}

/// Worker count from the environment, or 1.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_VAR)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// A single configuration run over a list of seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    #[serde(default)]
    pub env_constants: EnvConstants,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default = "default_log_interval")]
    pub log_interval: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Seeds,
    #[serde(default)]
    pub master_seed: u64,
    /// Defaults to `<output root>/<method>-<config id>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            env: self.env,
            env_constants: self.env_constants.clone(),
            dqn: self.dqn.clone(),
            total_steps: self.total_steps,
            grid_points: self.grid_points,
            log_interval: self.log_interval,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            let rc = self.run_config();
            output_root().join(format!("{}-{}", rc.method(), rc.fingerprint()))
        })
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(default_workers)
    }

    /// Copy with defaults filled in, as echoed into output directories.
    /// The worker count is left out since it never changes results.
    pub fn resolved(&self) -> Self {
        let rc = self.run_config().resolved();
        Self {
            total_steps: rc.total_steps,
            grid_points: rc.grid_points,
            output_dir: Some(self.output_dir()),
            workers: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        Ok(self.run_config().validate()?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }
}

/// Dotted-path overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides(Vec<(String, toml::Value)>);

impl Overrides {
    pub fn set(&mut self, path: &str, value: impl Into<toml::Value>) -> &mut Self {
        self.0.push((path.to_string(), value.into()));
        self
    }

    pub fn set_opt<V: Into<toml::Value>>(&mut self, path: &str, value: Option<V>) -> &mut Self {
        if let Some(v) = value {
            self.set(path, v);
        }
        self
    }

    pub fn apply(&self, table: &mut toml::Table) -> Result<(), ConfigError> {
        for (path, value) in &self.0 {
            let mut keys: Vec<&str> = path.split('.').collect();
            let last = keys.pop().expect("non-empty path");
            let mut cur = &mut *table;
            for k in keys {
                let entry = cur
                    .entry(k.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                cur = entry.as_table_mut().ok_or_else(|| ConfigError::Field {
                    field: path.clone(),
                    message: format!("`{k}` is not a table"),
                })?;
            }
            cur.insert(last.to_string(), value.clone());
        }
        Ok(())
    }
}

/// Reads an optional TOML file, applies `overrides`, and deserializes.
pub fn load_table(path: Option<&Path>) -> Result<toml::Table, ConfigError> {
    match path {
        None => Ok(toml::Table::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            text.parse::<toml::Table>()
                .map_err(|e| ConfigError::Parse(format!("{}: {}", p.display(), e.message())))
        }
    }
}

pub fn load_with<C: serde::de::DeserializeOwned>(path: Option<&Path>, overrides: &Overrides) -> Result<C, ConfigError> {
    let mut table = load_table(path)?;
    overrides.apply(&mut table)?;
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))
}

pub fn load_experiment(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = load_with(path, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}
