//! Run configuration: backends per role, thresholds, reasoner settings,
//! prompt directory and run options, read from TOML.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::report::MetricMode;
use crate::backend::{
    BackendError, Backends, ChatBackend, DecodeParams, FixtureGrounder, HttpBackend, HttpConfig, RetryPolicy, Role,
    ScenarioError, ScriptedBackend, ScriptedScenario,
};
use crate::prompts::{PromptError, PromptSet};
use crate::reasoning::ReasonerConfig;
use crate::relations::ExtractionMode;
use crate::types::{ScoringParams, TypeError};

/// Key under `[backends]` that applies to every role without its own entry.
pub const DEFAULT_BACKEND: &str = "default";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown backend role '{0}'")]
    UnknownRole(String),
    #[error("backends.{key}: missing '{field}'")]
    MissingField { key: String, field: &'static str },
    #[error("backends.{key}: environment variable {var} is not set")]
    MissingEnv { key: String, var: String },
    #[error("backends.{0}: kind 'fixture' is only valid for the grounder role")]
    FixtureRole(String),
    #[error("backends.{key}: {source}")]
    Scenario {
        key: String,
        #[source]
        source: ScenarioError,
    },
    #[error(transparent)]
    Prompts(#[from] PromptError),
    #[error(transparent)]
    Thresholds(#[from] TypeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Invalid(String),
    #[error("roles not configured: {}", .0.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(", "))]
    MissingRoles(Vec<Role>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible chat-completions server.
    #[default]
    Http,
    /// Responses replayed from a scenario file.
    Scripted,
    /// Bounding boxes from a JSON file (grounder role only).
    Fixture,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes: Option<String>,
}

impl BackendSpec {
    /// Identity of the underlying connection; roles whose specs differ only
    /// in decoding parameters share one backend instance.
    fn connection_key(&self) -> String {
        let shared = BackendSpec { temperature: None, max_tokens: None, ..self.clone() };
        serde_json::to_string(&shared).expect("spec serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Samples in flight at once.
    pub concurrency: usize,
    pub metric: MetricMode,
    /// Record per-stage wall-clock time. Defaults to on unless every backend
    /// is deterministic, where it would break byte-identical reruns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_wall_time: Option<bool>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { concurrency: 4, metric: MetricMode::Exact, record_wall_time: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VrdConfig {
    pub extraction_mode: ExtractionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSettings {
    pub samples_per_item: usize,
}

impl Default for CurationSettings {
    fn default() -> Self {
        Self { samples_per_item: 3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backends: BTreeMap<String, BackendSpec>,
    pub thresholds: ScoringParams,
    pub reasoner: ReasonerConfig,
    pub prompts: PromptsConfig,
    pub run: RunConfig,
    pub vrd: VrdConfig,
    pub curation: CurationSettings,
    /// Directory relative paths resolve against; the config file's directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text)?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for key in self.backends.keys() {
            if key != DEFAULT_BACKEND && Role::parse(key).is_none() {
                return Err(ConfigError::UnknownRole(key.clone()));
            }
        }
        self.thresholds.validate()?;
        if self.reasoner.max_reflections == 0 {
            return Err(ConfigError::Invalid("reasoner.max_reflections must be at least 1".into()));
        }
        if self.run.concurrency == 0 {
            return Err(ConfigError::Invalid("run.concurrency must be at least 1".into()));
        }
        if self.curation.samples_per_item == 0 {
            return Err(ConfigError::Invalid("curation.samples_per_item must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    /// The spec serving `role` and the key it was found under.
    pub fn spec_for(&self, role: Role) -> Option<(&str, &BackendSpec)> {
        self.backends
            .get_key_value(role.as_str())
            .or_else(|| self.backends.get_key_value(DEFAULT_BACKEND))
            .map(|(k, v)| (k.as_str(), v))
    }

    /// True if grounding is served from a box file rather than a model.
    pub fn uses_fixture_grounder(&self) -> bool {
        self.spec_for(Role::Grounder).is_some_and(|(_, s)| s.kind == BackendKind::Fixture)
    }

    pub fn load_prompts(&self) -> Result<PromptSet, ConfigError> {
        Ok(match &self.prompts.dir {
            Some(dir) => PromptSet::load(&self.resolve(dir))?,
            None => PromptSet::builtin(),
        })
    }

    /// Instantiates a backend for every configured role.
    pub fn build_backends(&self) -> Result<Backends, ConfigError> {
        let mut cache: HashMap<String, Arc<dyn ChatBackend>> = HashMap::new();
        let mut backends = Backends::new();
        for role in Role::ALL {
            let Some((key, spec)) = self.spec_for(role) else { continue };
            if spec.kind == BackendKind::Fixture {
                if role != Role::Grounder {
                    if key == DEFAULT_BACKEND {
                        continue;
                    }
                    return Err(ConfigError::FixtureRole(key.to_string()));
                }
                let path = self.resolve(spec.boxes.as_deref().ok_or(ConfigError::MissingField {
                    key: key.to_string(),
                    field: "boxes",
                })?);
                let grounder = FixtureGrounder::load(&path).map_err(|source| ConfigError::Io { path, source })?;
                backends = backends.with_grounder(Arc::new(grounder));
                continue;
            }
            let backend = match cache.get(&spec.connection_key()) {
                Some(b) => b.clone(),
                None => {
                    let b = self.instantiate(key, spec)?;
                    cache.insert(spec.connection_key(), b.clone());
                    b
                }
            };
            let defaults = DecodeParams::for_role(role);
            let decode = DecodeParams {
                temperature: spec.temperature.unwrap_or(defaults.temperature),
                max_tokens: spec.max_tokens.unwrap_or(defaults.max_tokens),
            };
            backends = backends.bind_with(role, backend, decode);
        }
        Ok(backends)
    }

    fn instantiate(&self, key: &str, spec: &BackendSpec) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        let missing = |field| ConfigError::MissingField { key: key.to_string(), field };
        match spec.kind {
            BackendKind::Scripted => {
                let path = self.resolve(spec.scenario.as_deref().ok_or(missing("scenario"))?);
                let scenario = ScriptedScenario::load(&path)
                    .map_err(|source| ConfigError::Scenario { key: key.to_string(), source })?;
                let backend = ScriptedBackend::new(scenario)
                    .map_err(|source| ConfigError::Scenario { key: key.to_string(), source })?;
                Ok(Arc::new(backend))
            }
            BackendKind::Http => {
                let mut http = HttpConfig::new(
                    spec.url.clone().ok_or(missing("url"))?,
                    spec.model.clone().ok_or(missing("model"))?,
                );
                if let Some(var) = &spec.api_key_env {
                    let value = std::env::var(var)
                        .map_err(|_| ConfigError::MissingEnv { key: key.to_string(), var: var.clone() })?;
                    http.api_key = Some(value);
                }
                if let Some(n) = spec.max_attempts {
                    if n == 0 {
                        return Err(ConfigError::Invalid(format!("backends.{key}.max_attempts must be at least 1")));
                    }
                    http.retry = RetryPolicy { max_attempts: n, ..RetryPolicy::default() };
                }
                if let Some(secs) = spec.timeout_secs {
                    http.timeout = Duration::from_secs(secs);
                }
                Ok(Arc::new(HttpBackend::new(http)?))
            }
            BackendKind::Fixture => Err(ConfigError::FixtureRole(key.to_string())),
        }
    }

    /// Digest of everything that determines a run's output: the effective
    /// settings (except concurrency), referenced scenario and box files, and
    /// the prompt templates.
    pub fn fingerprint(&self, prompts: &PromptSet) -> Result<String, ConfigError> {
        let mut effective = self.clone();
        effective.run.concurrency = 0;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&effective).expect("config serializes"));
        for spec in self.backends.values() {
            for file in [&spec.scenario, &spec.boxes].into_iter().flatten() {
                let path = self.resolve(file);
                let bytes = std::fs::read(&path).map_err(|source| ConfigError::Io { path, source })?;
                hasher.update([0]);
                hasher.update(file.as_bytes());
                hasher.update([0]);
                hasher.update(&bytes);
            }
        }
        hasher.update(prompts.digest_source().as_bytes());
        Ok(hex::encode(hasher.finalize()))
    }
}
