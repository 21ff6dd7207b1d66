//! Blocking client for OpenAI-style `chat/completions` endpoints.

use std::fmt;
use std::num::NonZeroU32;
use std::thread;
use std::time::Duration;

use base64::Engine;
use governor::clock::{Clock, DefaultClock};
use governor::{DefaultDirectRateLimiter, Quota, RateLimiter};
use secrecy::{ExposeSecret, SecretString};
use serde_json::{Value, json};

use super::provider::{ChatProvider, ChatRequest, Part, ProviderError};

#[derive(Clone)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    pub api_key: SecretString,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Overrides the per-template default when set.
    pub temperature: Option<f32>,
    pub requests_per_minute: Option<NonZeroU32>,
    pub vision: bool,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("provider endpoint is not set")]
    MissingEndpoint,
    #[error("provider endpoint must be an http(s) URL")]
    BadEndpoint,
    #[error("provider API key is not set")]
    MissingKey,
    #[error("timeout must be positive")]
    ZeroTimeout,
}

impl ProviderConfig {
    pub fn new(endpoint: &str, model_name: &str, api_key: SecretString) -> Self {
        Self {
            endpoint: endpoint.to_owned(),
            model_name: model_name.to_owned(),
            api_key,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            temperature: None,
            requests_per_minute: None,
            vision: true,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.endpoint.trim().is_empty() {
            return Err(ConfigError::MissingEndpoint);
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(ConfigError::BadEndpoint);
        }
        if self.api_key.expose_secret().is_empty() {
            return Err(ConfigError::MissingKey);
        }
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        Ok(())
    }
}

impl fmt::Debug for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderConfig")
            .field("endpoint", &self.endpoint)
            .field("model_name", &self.model_name)
            .field("api_key", &"[redacted]")
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("temperature", &self.temperature)
            .field("requests_per_minute", &self.requests_per_minute)
            .finish()
    }
}

/// Replaces every occurrence of `secret` in `text`.
pub fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() { text.to_owned() } else { text.replace(secret, "[redacted]") }
}

pub struct HttpProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
    limiter: Option<DefaultDirectRateLimiter>,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = config.requests_per_minute.map(|n| RateLimiter::direct(Quota::per_minute(n)));
        Ok(Self { config, agent, limiter })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn wait_for_token(&self) {
        let Some(limiter) = &self.limiter else { return };
        while let Err(not_until) = limiter.check() {
            thread::sleep(not_until.wait_time_from(DefaultClock::default().now()));
        }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let content = if m.has_images() {
                    let parts: Vec<Value> = m
                        .parts
                        .iter()
                        .map(|p| match p {
                            Part::Text(t) => json!({"type": "text", "text": t}),
                            Part::Image(a) => {
                                let data = base64::engine::general_purpose::STANDARD.encode(&a.bytes);
                                json!({"type": "image_url", "image_url": {"url": format!("data:{};base64,{data}", a.media_type)}})
                            }
                        })
                        .collect();
                    Value::Array(parts)
                } else {
                    Value::String(m.joined_text())
                };
                json!({"role": m.role.as_str(), "content": content})
            })
            .collect();
        json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature.unwrap_or(request.temperature),
            "messages": messages,
        })
    }

    fn attempt(&self, body: &[u8]) -> Result<String, ProviderError> {
        let key = self.config.api_key.expose_secret();
        let scrub = |text: String| redact(&text, key);
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| ProviderError::Unreachable(scrub(e.to_string())))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Unreachable(scrub(e.to_string())))?;
        if !(200..300).contains(&status) {
            let mut body = scrub(text);
            body.truncate(body.char_indices().nth(500).map_or(body.len(), |(i, _)| i));
            return Err(ProviderError::Status { status, body });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        if request.has_images() && !self.config.vision {
            return Err(ProviderError::NoVision);
        }
        let body = serde_json::to_vec(&self.body(request)).expect("request body serializes");
        let mut attempt = 0;
        loop {
            self.wait_for_token();
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retriable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    tracing::warn!(
                        template = %request.template,
                        attempt,
                        max_retries = self.config.max_retries,
                        reason = %e,
                        "retrying provider request"
                    );
                    thread::sleep(self.config.backoff.saturating_mul(1 << (attempt - 1).min(10)));
                }
                Err(e) => {
                    tracing::error!(template = %request.template, attempts = attempt + 1, reason = %e, "provider request failed");
                    return Err(e);
                }
            }
        }
    }

    fn supports_vision(&self) -> bool {
        self.config.vision
    }

    fn name(&self) -> &str {
        &self.config.model_name
    }
}
