//! Layered settings: command-line flags over a config file over environment
//! variables over built-in defaults.
//!
//! The config file is a flat sectioned `key = value` file:
//!
//! ```text
//! # comments start with '#' or ';'
//! [tracker]
//! mode = fixture
//! fixture = fixtures/backlog51.json
//!
//! [engine]
//! threshold = 0.65
//! ```
//!
//! Values may be wrapped in double quotes. Unknown sections or keys are
//! rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::dedup::{EngineConfig, SurvivorRule};
use crate::embedding::{EmbeddingProviderConfig, ProviderKind};
use crate::gateway::{GatewayConfig, GatewayMode, RestAuth};
use crate::suggest::{ChatProviderConfig, ChatProviderKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("unknown setting {0}")]
    UnknownKey(String),
    #[error("setting {key}: cannot parse {value:?}: {message}")]
    InvalidValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("{0}")]
    Missing(String),
}

/// Every recognised `section.key`.
const KNOWN_KEYS: &[&str] = &[
    "embedding.provider",
    "embedding.model",
    "embedding.dim",
    "embedding.max_batch",
    "embedding.max_parallel",
    "embedding.timeout_secs",
    "embedding.api_url",
    "embedding.api_key",
    "embedding.cache_path",
    "chat.provider",
    "chat.model",
    "chat.temperature",
    "chat.max_tokens",
    "chat.timeout_secs",
    "chat.api_url",
    "chat.api_key",
    "chat.prompts_dir",
    "tracker.mode",
    "tracker.fixture",
    "tracker.base_url",
    "tracker.project",
    "tracker.user",
    "tracker.token",
    "tracker.page_size",
    "tracker.timeout_secs",
    "engine.threshold",
    "engine.redundancy_threshold",
    "engine.survivor",
    "project.description",
];

/// Environment variables and the setting each one supplies.
pub const ENV_KEYS: &[(&str, &str)] = &[
    ("EMBED_API_KEY", "embedding.api_key"),
    ("EMBED_API_URL", "embedding.api_url"),
    ("CHAT_API_KEY", "chat.api_key"),
    ("CHAT_API_URL", "chat.api_url"),
    ("JIRA_TOKEN", "tracker.token"),
];

/// One layer of raw settings keyed by `section.key`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer(BTreeMap<String, String>);

impl ConfigLayer {
    pub fn new() -> Self {
        ConfigLayer::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.0.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut layer = ConfigLayer::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let syntax = |message: String| ConfigError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated section header".into()))?;
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key = value, got {line:?}")))?;
            let section = section
                .as_deref()
                .ok_or_else(|| syntax("setting outside of any [section]".into()))?;
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            let full = format!("{section}.{}", key.trim());
            layer.set(&full, value).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(layer)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        ConfigLayer::parse(&text, path)
    }

    /// The layer supplied by environment variables, read through `lookup`
    /// so tests need not touch the process environment.
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Self {
        let mut layer = ConfigLayer::new();
        for (var, key) in ENV_KEYS {
            if let Some(value) = lookup(var).filter(|v| !v.is_empty()) {
                layer.0.insert(key.to_string(), value);
            }
        }
        layer
    }

    /// Values in `self` win over values in `lower`.
    pub fn over(mut self, lower: &ConfigLayer) -> Self {
        for (k, v) in &lower.0 {
            self.0.entry(k.clone()).or_insert_with(|| v.clone());
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub embedding: EmbeddingProviderConfig,
    pub chat: ChatProviderConfig,
    pub prompts_dir: Option<PathBuf>,
    /// `None` when neither a fixture nor a project was configured.
    pub gateway: Option<GatewayConfig>,
    pub engine: EngineConfig,
    pub project_description: String,
}

fn parse_value<T: FromStr>(layer: &ConfigLayer, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    layer
        .get(key)
        .map(|v| {
            v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                message: e.to_string(),
            })
        })
        .transpose()
}

fn parse_choice<T: Copy>(
    layer: &ConfigLayer,
    key: &str,
    choices: &[(&str, T)],
) -> Result<Option<T>, ConfigError> {
    let Some(v) = layer.get(key) else {
        return Ok(None);
    };
    choices
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(v))
        .map(|(_, c)| Some(*c))
        .ok_or_else(|| ConfigError::InvalidValue {
            key: key.to_string(),
            value: v.to_string(),
            message: format!(
                "expected one of {}",
                choices.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ),
        })
}

impl Settings {
    /// Builds typed settings from a fully layered set of raw values.
    pub fn resolve(layer: &ConfigLayer) -> Result<Settings, ConfigError> {
        let secs = |key: &str| -> Result<Option<Duration>, ConfigError> {
            Ok(parse_value::<u64>(layer, key)?.map(Duration::from_secs))
        };
        let string = |key: &str| layer.get(key).map(str::to_string);

        let mut embedding = EmbeddingProviderConfig::default();
        if let Some(kind) = parse_choice(
            layer,
            "embedding.provider",
            &[
                ("local-hash", ProviderKind::LocalHash),
                ("remote-api", ProviderKind::RemoteApi),
            ],
        )? {
            embedding.provider = kind;
        }
        if let Some(m) = string("embedding.model") {
            embedding.model_name = m;
        }
        embedding.dim = parse_value(layer, "embedding.dim")?.unwrap_or(embedding.dim);
        embedding.max_batch = parse_value(layer, "embedding.max_batch")?.unwrap_or(embedding.max_batch);
        embedding.max_parallel_requests =
            parse_value(layer, "embedding.max_parallel")?.unwrap_or(embedding.max_parallel_requests);
        embedding.request_timeout = secs("embedding.timeout_secs")?.unwrap_or(embedding.request_timeout);
        embedding.api_url = string("embedding.api_url");
        embedding.api_key = string("embedding.api_key");
        embedding.cache_path = string("embedding.cache_path").map(PathBuf::from);

        let mut chat = ChatProviderConfig::default();
        if let Some(kind) = parse_choice(
            layer,
            "chat.provider",
            &[
                ("mock", ChatProviderKind::Mock),
                ("remote-api", ChatProviderKind::RemoteApi),
            ],
        )? {
            chat.provider = kind;
        }
        if let Some(m) = string("chat.model") {
            chat.model_name = m;
        }
        chat.temperature = parse_value(layer, "chat.temperature")?.unwrap_or(chat.temperature);
        chat.max_output_tokens = parse_value(layer, "chat.max_tokens")?.unwrap_or(chat.max_output_tokens);
        chat.request_timeout = secs("chat.timeout_secs")?.unwrap_or(chat.request_timeout);
        chat.api_url = string("chat.api_url");
        chat.api_key = string("chat.api_key");

        let mut engine = EngineConfig::default();
        if let Some(t) = parse_value::<f64>(layer, "engine.threshold")? {
            engine = EngineConfig::with_threshold(t);
        }
        if let Some(t) = parse_value(layer, "engine.redundancy_threshold")? {
            engine.new_issue_redundancy_threshold = t;
        }
        if let Some(rule) = parse_choice(
            layer,
            "engine.survivor",
            &[
                ("earliest-created", SurvivorRule::EarliestCreated),
                ("lowest-key", SurvivorRule::LowestKey),
            ],
        )? {
            engine.survivor_rule = rule;
        }

        Ok(Settings {
            embedding,
            chat,
            prompts_dir: string("chat.prompts_dir").map(PathBuf::from),
            gateway: Self::gateway(layer)?,
            engine,
            project_description: string("project.description").unwrap_or_default(),
        })
    }

    fn gateway(layer: &ConfigLayer) -> Result<Option<GatewayConfig>, ConfigError> {
        let fixture = layer.get("tracker.fixture");
        let project = layer.get("tracker.project");
        let mode = parse_choice(
            layer,
            "tracker.mode",
            &[("fixture", GatewayMode::Fixture), ("rest", GatewayMode::Rest)],
        )?
        .or(match (fixture, project) {
            (Some(_), _) => Some(GatewayMode::Fixture),
            (None, Some(_)) => Some(GatewayMode::Rest),
            (None, None) => None,
        });
        let mut config = match mode {
            None => return Ok(None),
            Some(GatewayMode::Fixture) => GatewayConfig::fixture(fixture.ok_or_else(|| {
                ConfigError::Missing("fixture mode needs a fixture path (--fixture)".into())
            })?),
            Some(GatewayMode::Rest) => {
                let project = project.ok_or_else(|| {
                    ConfigError::Missing("REST mode needs a project key (--project)".into())
                })?;
                let base = layer.get("tracker.base_url").ok_or_else(|| {
                    ConfigError::Missing("REST mode needs a tracker base URL (--base-url)".into())
                })?;
                url::Url::parse(base).map_err(|e| ConfigError::InvalidValue {
                    key: "tracker.base_url".into(),
                    value: base.to_string(),
                    message: e.to_string(),
                })?;
                let auth = layer
                    .get("tracker.token")
                    .map(|token| match layer.get("tracker.user") {
                        Some(user) => RestAuth::Basic {
                            user: user.to_string(),
                            token: token.to_string(),
                        },
                        None => RestAuth::Bearer(token.to_string()),
                    });
                GatewayConfig::rest(base, project, auth)
            }
        };
        if let Some(n) = parse_value(layer, "tracker.page_size")? {
            config.page_size = n;
        }
        if let Some(s) = parse_value::<u64>(layer, "tracker.timeout_secs")? {
            config.request_timeout = Duration::from_secs(s);
        }
        Ok(Some(config))
    }
}
