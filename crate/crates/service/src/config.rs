//! Layered settings: built-in defaults, then a TOML file, then
//! `HOMEPLAN_*` environment variables, then command-line flags. Later
//! layers win.

use std::num::NonZeroU32;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use secrecy::{ExposeSecret, SecretString};
use serde::Deserialize;

use crate::llm::gateway::GatewaySettings;
use crate::llm::http::{ConfigError, HttpProvider, ProviderConfig};
use crate::llm::provider::ChatProvider;
use crate::llm::stub::StubProvider;
use crate::pipeline::Policy;

#[derive(Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub db: Option<PathBuf>,
    pub listen: Option<String>,
    pub provider: Option<String>,
    pub stub_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Accepted from the file and the environment only.
    pub api_key: Option<SecretString>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub requests_per_minute: Option<u32>,
    pub vision: Option<bool>,
    pub output_language: Option<String>,
    pub policy: Option<Policy>,
    pub seed: Option<u64>,
    pub families: Option<usize>,
    pub task_sets: Option<usize>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl std::fmt::Debug for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Layer")
            .field("provider", &self.provider)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "[redacted]"))
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{key}: cannot parse `{value}`")]
    Invalid { key: String, value: String },
    #[error("provider: {0}")]
    Provider(String),
}

impl From<ConfigError> for SettingsError {
    fn from(e: ConfigError) -> Self {
        SettingsError::Provider(e.to_string())
    }
}

macro_rules! take {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl Layer {
    /// `other` wins wherever it has a value.
    pub fn overlay(mut self, other: Layer) -> Layer {
        take!(self, other; db, listen, provider, stub_dir, endpoint, model, api_key, timeout_secs, max_retries,
            requests_per_minute, vision, output_language, policy, seed, families, task_sets, jobs, out_dir);
        self
    }

    pub fn from_file(path: &Path) -> Result<Layer, SettingsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SettingsError::File { path: path.to_owned(), message: e.to_string() })?;
        toml::from_str(&text).map_err(|e| SettingsError::File { path: path.to_owned(), message: e.to_string() })
    }

    /// Reads `HOMEPLAN_<FIELD>` through `lookup` (`std::env::var` in the
    /// binary, a map in tests).
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Layer, SettingsError> {
        fn parse<T: std::str::FromStr>(key: &str, value: Option<String>) -> Result<Option<T>, SettingsError> {
            value
                .map(|v| v.trim().parse().map_err(|_| SettingsError::Invalid { key: key.to_owned(), value: v.clone() }))
                .transpose()
        }
        let get = |field: &str| {
            let key = format!("HOMEPLAN_{}", field.to_uppercase());
            (lookup(&key).filter(|v| !v.is_empty()), key)
        };
        macro_rules! read {
            ($f:ident) => {{
                let (v, key) = get(stringify!($f));
                parse(&key, v)?
            }};
        }
        let (policy, key) = get("policy");
        let policy = policy
            .map(|p| Policy::parse(p.trim()).ok_or(SettingsError::Invalid { key, value: p.clone() }))
            .transpose()?;
        Ok(Layer {
            db: read!(db),
            listen: read!(listen),
            provider: read!(provider),
            stub_dir: read!(stub_dir),
            endpoint: read!(endpoint),
            model: read!(model),
            api_key: get("api_key").0.map(SecretString::from),
            timeout_secs: read!(timeout_secs),
            max_retries: read!(max_retries),
            requests_per_minute: read!(requests_per_minute),
            vision: read!(vision),
            output_language: read!(output_language),
            policy,
            seed: read!(seed),
            families: read!(families),
            task_sets: read!(task_sets),
            jobs: read!(jobs),
            out_dir: read!(out_dir),
        })
    }

    pub fn resolve(self) -> Settings {
        Settings {
            db: self.db.unwrap_or_else(|| PathBuf::from("homeplan.db")),
            listen: self.listen.unwrap_or_else(|| "127.0.0.1:8080".into()),
            provider: self.provider.unwrap_or_else(|| "stub".into()),
            stub_dir: self.stub_dir,
            endpoint: self.endpoint,
            model: self.model.unwrap_or_else(|| "gpt-4o".into()),
            api_key: self.api_key,
            timeout: Duration::from_secs(self.timeout_secs.unwrap_or(60)),
            max_retries: self.max_retries.unwrap_or(2),
            requests_per_minute: self.requests_per_minute.and_then(NonZeroU32::new),
            vision: self.vision.unwrap_or(true),
            output_language: self.output_language.unwrap_or_else(|| "English".into()),
            policy: self.policy.unwrap_or(Policy::DeterministicOnly),
            seed: self.seed.unwrap_or(42),
            families: self.families.unwrap_or(10),
            task_sets: self.task_sets.unwrap_or(3),
            jobs: self.jobs.unwrap_or(1).max(1),
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from("out")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub db: PathBuf,
    pub listen: String,
    pub provider: String,
    pub stub_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key: Option<SecretString>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub requests_per_minute: Option<NonZeroU32>,
    pub vision: bool,
    pub output_language: String,
    pub policy: Policy,
    pub seed: u64,
    pub families: usize,
    pub task_sets: usize,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl Settings {
    pub fn gateway_settings(&self) -> GatewaySettings {
        GatewaySettings { output_language: self.output_language.clone(), ..GatewaySettings::default() }
    }

    /// Builds the configured provider. `stub` reads canned replies from
    /// `stub_dir` (or uses none); `http` needs an endpoint and a key.
    pub fn provider(&self) -> Result<Arc<dyn ChatProvider>, SettingsError> {
        match self.provider.as_str() {
            "stub" => {
                let stub = match &self.stub_dir {
                    Some(dir) => StubProvider::from_dir(dir)
                        .map_err(|e| SettingsError::Provider(format!("stub replies in {}: {e}", dir.display())))?,
                    None => StubProvider::new(),
                };
                Ok(Arc::new(stub.with_vision(self.vision)))
            }
            "http" | "openai" => {
                let key = self.api_key.clone().unwrap_or_else(|| SecretString::from(""));
                let mut cfg = ProviderConfig::new(self.endpoint.as_deref().unwrap_or(""), &self.model, key);
                cfg.timeout = self.timeout;
                cfg.max_retries = self.max_retries;
                cfg.requests_per_minute = self.requests_per_minute;
                cfg.vision = self.vision;
                Ok(Arc::new(HttpProvider::new(cfg)?))
            }
            other => Err(SettingsError::Provider(format!("unknown provider `{other}` (stub, http)"))),
        }
    }

    pub fn has_api_key(&self) -> bool {
        self.api_key.as_ref().is_some_and(|k| !k.expose_secret().is_empty())
    }
}
