//! Run configuration: one TOML document, environment override for the
//! backend key only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use chatox_core::classify::ClassifyConfig;
use chatox_core::ingest::{Genre, GenreOverrides};
use chatox_stats::Metric;

use crate::error::CliError;

pub const API_KEY_ENV: &str = "BACKEND_API_KEY";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default)]
    pub prelabel: PrelabelSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub ingest: IngestSection,
    pub paths: PathsSection,
    #[serde(skip)]
    base_dir: PathBuf,
    #[serde(skip)]
    pub config_digest: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Replay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default = "default_backend_kind")]
    pub kind: BackendKind,
    #[serde(default = "default_backend_url")]
    pub url: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// HTTP only: append every request/response pair to this replayable log.
    #[serde(default)]
    pub record_log: Option<PathBuf>,
    /// Replay only: the recorded request log to answer from.
    #[serde(default)]
    pub replay_log: Option<PathBuf>,
}

fn default_backend_kind() -> BackendKind {
    BackendKind::Http
}
fn default_backend_url() -> String {
    "http://localhost:8000/v1/chat/completions".into()
}
fn default_model() -> String {
    "phi4".into()
}
fn default_max_in_flight() -> usize {
    4
}
fn default_timeout_s() -> f64 {
    30.0
}
fn default_max_retries() -> u32 {
    3
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: default_backend_kind(),
            url: default_backend_url(),
            model: default_model(),
            max_in_flight: default_max_in_flight(),
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            record_log: None,
            replay_log: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    #[serde(default = "default_window_s")]
    pub window_s: f64,
    #[serde(default = "default_context_cap")]
    pub context_cap: usize,
    #[serde(default)]
    pub temperature: f64,
}

fn default_window_s() -> f64 {
    10.0
}
fn default_context_cap() -> usize {
    50
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self {
            window_s: default_window_s(),
            context_cap: default_context_cap(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrelabelSection {
    /// One allowlisted message per line; `#` comments allowed. Falls back to
    /// the built-in conservative list.
    #[serde(default)]
    pub allowlist_path: Option<PathBuf>,
    /// Bot user names, matched exactly.
    #[serde(default)]
    pub bots: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    #[serde(default = "default_n_perm")]
    pub n_perm: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_metric")]
    pub metric: String,
}

fn default_n_perm() -> u32 {
    9999
}
fn default_seed() -> u64 {
    42
}
fn default_alpha() -> f64 {
    0.05
}
fn default_metric() -> String {
    "bray_curtis".into()
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            n_perm: default_n_perm(),
            seed: default_seed(),
            alpha: default_alpha(),
            metric: default_metric(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    /// Per-game genre overrides: game name to genre token or "none".
    #[serde(default)]
    pub genre_overrides: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Directory holding the normalized corpus.
    pub corpus: PathBuf,
    /// Label store file.
    pub store: PathBuf,
    /// Directory for reports and run artifacts.
    pub reports: PathBuf,
}

impl RunConfig {
    /// Loads, digests, and validates a config file. Relative paths inside the
    /// file resolve against the file's own directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read(path).map_err(|e| {
            CliError::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        let mut config: RunConfig = toml::from_str(&String::from_utf8_lossy(&raw))
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        config.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        config.config_digest = chatox_core::digest::digest16(&[&raw]);
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.classify.window_s <= 0.0 {
            return Err(CliError::Config("classify.window_s must be > 0".into()));
        }
        if self.stats.n_perm < 1 {
            return Err(CliError::Config("stats.n_perm must be >= 1".into()));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(CliError::Config("stats.alpha must be in (0, 1)".into()));
        }
        if self.backend.max_in_flight < 1 {
            return Err(CliError::Config("backend.max_in_flight must be >= 1".into()));
        }
        if self.backend.timeout_s <= 0.0 {
            return Err(CliError::Config("backend.timeout_s must be > 0".into()));
        }
        self.metric()?;
        if matches!(self.backend.kind, BackendKind::Replay) && self.backend.replay_log.is_none() {
            return Err(CliError::Config(
                "backend.kind = \"replay\" requires backend.replay_log".into(),
            ));
        }
        for (game, token) in &self.ingest.genre_overrides {
            if token != "none" && token.parse::<Genre>().is_err() {
                return Err(CliError::Config(format!(
                    "ingest.genre_overrides[\"{game}\"]: unknown genre '{token}'"
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.resolve(&self.paths.corpus)
    }

    pub fn store_path(&self) -> PathBuf {
        self.resolve(&self.paths.store)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(&self.paths.reports)
    }

    pub fn metric(&self) -> Result<Metric, CliError> {
        self.stats
            .metric
            .parse()
            .map_err(|e: String| CliError::Config(format!("stats.metric: {e}")))
    }

    pub fn genre_overrides(&self) -> GenreOverrides {
        let map = self
            .ingest
            .genre_overrides
            .iter()
            .map(|(game, token)| {
                let genre = if token == "none" {
                    None
                } else {
                    token.parse::<Genre>().ok()
                };
                (game.clone(), genre)
            })
            .collect();
        GenreOverrides::new(map)
    }

    pub fn classify_config(&self) -> ClassifyConfig {
        ClassifyConfig {
            window_s: self.classify.window_s,
            context_cap: self.classify.context_cap,
            max_in_flight: self.backend.max_in_flight,
            max_retries: self.backend.max_retries,
            backoff_base: Duration::from_secs(1),
        }
    }

    pub fn api_key() -> Option<String> {
        std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
    }
}
