//! Run configuration. Sources are layered: defaults, then environment,
//! then a JSON config file, then command-line flags.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debate::Strictness;
use crate::nas::SearchMode;
use crate::runtime::BackendMode;

pub const ENV_PREFIX: &str = "KPDEBATE_";
pub const DEFAULT_API_KEY_ENV: &str = "KPDEBATE_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    #[default]
    None,
    Static,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Wall,
    Fixed,
}

/// Every field optional; one of these per configuration source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub recency_days: Option<u32>,
    pub max_search: Option<usize>,
    pub model_id: Option<String>,
    pub backend: Option<BackendMode>,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub search: Option<SearchKind>,
    pub search_file: Option<PathBuf>,
    pub search_endpoint: Option<String>,
    pub search_mode: Option<SearchMode>,
    pub locale: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub pool_dir: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub strictness: Option<Strictness>,
    pub clock: Option<ClockMode>,
    pub fixed_time: Option<DateTime<Utc>>,
    pub as_of: Option<NaiveDate>,
    pub polish: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl PartialConfig {
    /// Fields set in `other` win.
    pub fn overlay(mut self, other: PartialConfig) -> Self {
        overlay!(self, other; recency_days, max_search, model_id, backend, script, endpoint,
            api_key_env, timeout_secs, search, search_file, search_endpoint, search_mode, locale,
            out_dir, pool_dir, templates_dir, strictness, clock, fixed_time, as_of, polish);
        self
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads `KPDEBATE_*` variables from `vars`.
    pub fn from_env(vars: &HashMap<String, String>) -> Result<Self, ConfigError> {
        fn get<T: std::str::FromStr>(vars: &HashMap<String, String>, key: &str) -> Result<Option<T>, ConfigError> {
            let name = format!("{ENV_PREFIX}{key}");
            match vars.get(&name) {
                None => Ok(None),
                Some(v) => v.trim().parse().map(Some).map_err(|_| ConfigError::Invalid {
                    field: name,
                    message: format!("cannot parse {v:?}"),
                }),
            }
        }
        fn enumeration<T: for<'de> Deserialize<'de>>(vars: &HashMap<String, String>, key: &str) -> Result<Option<T>, ConfigError> {
            let name = format!("{ENV_PREFIX}{key}");
            match vars.get(&name) {
                None => Ok(None),
                Some(v) => serde_json::from_value(serde_json::Value::String(v.trim().to_string()))
                    .map(Some)
                    .map_err(|_| ConfigError::Invalid { field: name, message: format!("unknown value {v:?}") }),
            }
        }
        Ok(Self {
            recency_days: get(vars, "RECENCY_DAYS")?,
            max_search: get(vars, "MAX_SEARCH")?,
            model_id: get(vars, "MODEL")?,
            backend: enumeration(vars, "BACKEND")?,
            script: get(vars, "SCRIPT")?,
            endpoint: get(vars, "ENDPOINT")?,
            api_key_env: None,
            timeout_secs: get(vars, "TIMEOUT_SECS")?,
            search: enumeration(vars, "SEARCH")?,
            search_file: get(vars, "SEARCH_FILE")?,
            search_endpoint: get(vars, "SEARCH_ENDPOINT")?,
            search_mode: enumeration(vars, "SEARCH_MODE")?,
            locale: get(vars, "LOCALE")?,
            out_dir: get(vars, "OUT_DIR")?,
            pool_dir: get(vars, "POOL_DIR")?,
            templates_dir: get(vars, "TEMPLATES_DIR")?,
            strictness: enumeration(vars, "STRICTNESS")?,
            clock: enumeration(vars, "CLOCK")?,
            fixed_time: get(vars, "FIXED_TIME")?,
            as_of: get(vars, "AS_OF")?,
            polish: get(vars, "POLISH")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub recency_days: u32,
    pub max_search: usize,
    pub model_id: String,
    pub backend: BackendMode,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub search: SearchKind,
    pub search_file: Option<PathBuf>,
    pub search_endpoint: Option<String>,
    pub search_mode: SearchMode,
    pub locale: String,
    pub out_dir: PathBuf,
    pub pool_dir: PathBuf,
    pub templates_dir: Option<PathBuf>,
    pub strictness: Strictness,
    pub clock: ClockMode,
    pub fixed_time: Option<DateTime<Utc>>,
    pub as_of: Option<NaiveDate>,
    pub polish: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            recency_days: 90,
            max_search: 5,
            model_id: "default".into(),
            backend: BackendMode::Scripted,
            script: None,
            endpoint: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
            search: SearchKind::None,
            search_file: None,
            search_endpoint: None,
            search_mode: SearchMode::Always,
            locale: "ko".into(),
            out_dir: PathBuf::from("runs"),
            pool_dir: PathBuf::from("pool"),
            templates_dir: None,
            strictness: Strictness::Strict,
            clock: ClockMode::Wall,
            fixed_time: None,
            as_of: None,
            polish: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config file {}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Conflict(String),
}

impl RunConfig {
    /// Layers `env`, `file` and `cli` over the defaults, in that order.
    pub fn resolve(env: PartialConfig, file: PartialConfig, cli: PartialConfig) -> Result<Self, ConfigError> {
        let p = PartialConfig::default().overlay(env).overlay(file).overlay(cli);
        let d = RunConfig::default();
        let cfg = RunConfig {
            recency_days: p.recency_days.unwrap_or(d.recency_days),
            max_search: p.max_search.unwrap_or(d.max_search),
            model_id: p.model_id.unwrap_or(d.model_id),
            backend: p.backend.unwrap_or(d.backend),
            script: p.script,
            endpoint: p.endpoint,
            api_key_env: p.api_key_env.unwrap_or(d.api_key_env),
            timeout_secs: p.timeout_secs.unwrap_or(d.timeout_secs),
            search: p.search.unwrap_or(d.search),
            search_file: p.search_file,
            search_endpoint: p.search_endpoint,
            search_mode: p.search_mode.unwrap_or(d.search_mode),
            locale: p.locale.unwrap_or(d.locale),
            out_dir: p.out_dir.unwrap_or(d.out_dir),
            pool_dir: p.pool_dir.unwrap_or(d.pool_dir),
            templates_dir: p.templates_dir,
            strictness: p.strictness.unwrap_or(d.strictness),
            clock: p.clock.unwrap_or(d.clock),
            fixed_time: p.fixed_time,
            as_of: p.as_of,
            polish: p.polish.unwrap_or(d.polish),
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural checks that need no I/O.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.recency_days < 1 {
            return Err(ConfigError::Invalid {
                field: "recency_days".into(),
                message: "must be at least 1".into(),
            });
        }
        match self.backend {
            BackendMode::Scripted if self.script.is_none() => {
                return Err(ConfigError::Conflict("the scripted backend needs --script".into()))
            }
            BackendMode::Remote if self.endpoint.is_none() => {
                return Err(ConfigError::Conflict("the remote backend needs an endpoint".into()))
            }
            _ => {}
        }
        match self.search {
            SearchKind::Static if self.search_file.is_none() => {
                Err(ConfigError::Conflict("static search needs a search file".into()))
            }
            SearchKind::Http if self.search_endpoint.is_none() => {
                Err(ConfigError::Conflict("http search needs a search endpoint".into()))
            }
            _ => Ok(()),
        }
    }

    /// The API key for the remote backend, read from the environment.
    pub fn api_key(&self, env: &HashMap<String, String>) -> Result<String, ConfigError> {
        env.get(&self.api_key_env)
            .filter(|k| !k.trim().is_empty())
            .cloned()
            .ok_or_else(|| {
                ConfigError::Conflict(format!(
                    "the remote backend needs credentials in ${}",
                    self.api_key_env
                ))
            })
    }
}
