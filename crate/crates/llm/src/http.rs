//! HTTP adapters for hosted chat models. Never used by the test suite.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::{ClientError, LlmClient};
use crate::message::{Message, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provider {
    /// Any endpoint speaking the OpenAI chat-completions protocol.
    Openai,
    Anthropic,
}

impl Provider {
    pub fn key_env_var(self) -> &'static str {
        match self {
            Provider::Openai => "OPENAI_API_KEY",
            Provider::Anthropic => "ANTHROPIC_API_KEY",
        }
    }

    fn default_endpoint(self) -> &'static str {
        match self {
            Provider::Openai => "https://api.openai.com/v1/chat/completions",
            Provider::Anthropic => "https://api.anthropic.com/v1/messages",
        }
    }

    pub fn from_name(name: &str) -> Option<Provider> {
        match name {
            "openai" => Some(Provider::Openai),
            "anthropic" => Some(Provider::Anthropic),
            _ => None,
        }
    }
}

/// The API key is accepted on input but never serialized or printed.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider: Provider,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

impl fmt::Debug for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderConfig")
            .field("provider", &self.provider)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("endpoint", &self.endpoint)
            .field("timeout_secs", &self.timeout_secs)
            .finish()
    }
}

impl ProviderConfig {
    pub fn new(provider: Provider, model: impl Into<String>) -> Self {
        ProviderConfig {
            provider,
            model: model.into(),
            api_key: None,
            endpoint: None,
            timeout_secs: default_timeout(),
        }
    }

    /// Fills a missing key from the provider's environment variable.
    pub fn with_env_key(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(self.provider.key_env_var()).ok();
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    config: ProviderConfig,
    api_key: String,
}

impl HttpClient {
    pub fn new(config: ProviderConfig) -> Result<Self, ClientError> {
        let api_key = config
            .api_key
            .clone()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| {
                ClientError::Credential(format!(
                    "no API key given and {} is not set",
                    config.provider.key_env_var()
                ))
            })?;
        Ok(HttpClient { config, api_key })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// The JSON body sent for `prompt`.
    pub fn request_body(&self, prompt: &[Message]) -> Value {
        match self.config.provider {
            Provider::Openai => {
                let messages: Vec<Value> = prompt
                    .iter()
                    .map(|m| {
                        let role = match m.role {
                            Role::Service => "system",
                            Role::DomainExpert => "user",
                            Role::Assistant => "assistant",
                        };
                        json!({"role": role, "content": m.text})
                    })
                    .collect();
                json!({"model": self.config.model, "messages": messages})
            }
            Provider::Anthropic => {
                // Leading service messages form the system prompt; later ones
                // are sent as user turns, and consecutive turns of the same
                // role are merged because the API requires alternation.
                let split = prompt
                    .iter()
                    .position(|m| m.role != Role::Service)
                    .unwrap_or(prompt.len());
                let system: Vec<&str> = prompt[..split].iter().map(|m| m.text.as_str()).collect();
                let mut turns: Vec<(&str, String)> = Vec::new();
                for m in &prompt[split..] {
                    let (role, text) = match m.role {
                        Role::Assistant => ("assistant", m.text.clone()),
                        Role::DomainExpert => ("user", m.text.clone()),
                        Role::Service => ("user", format!("[service] {}", m.text)),
                    };
                    match turns.last_mut() {
                        Some((r, t)) if *r == role => {
                            t.push_str("\n\n");
                            t.push_str(&text);
                        }
                        _ => turns.push((role, text)),
                    }
                }
                let messages: Vec<Value> = turns
                    .into_iter()
                    .map(|(role, text)| json!({"role": role, "content": text}))
                    .collect();
                json!({
                    "model": self.config.model,
                    "max_tokens": 4096,
                    "system": system.join("\n\n"),
                    "messages": messages,
                })
            }
        }
    }

    /// Pulls the response text out of a provider reply.
    pub fn response_text(&self, body: &Value) -> Result<String, ClientError> {
        let text = match self.config.provider {
            Provider::Openai => body
                .pointer("/choices/0/message/content")
                .and_then(Value::as_str)
                .map(str::to_string),
            Provider::Anthropic => body.get("content").and_then(Value::as_array).map(|blocks| {
                blocks
                    .iter()
                    .filter_map(|b| b.get("text").and_then(Value::as_str))
                    .collect::<Vec<_>>()
                    .join("")
            }),
        };
        text.ok_or_else(|| ClientError::Protocol(format!("no message text in {body}")))
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, prompt: &[Message]) -> Result<String, ClientError> {
        // A fresh blocking client per call: it must not outlive the worker
        // thread it was built on when used from an async server.
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let url = self
            .config
            .endpoint
            .as_deref()
            .unwrap_or(self.config.provider.default_endpoint());
        let request = http.post(url).json(&self.request_body(prompt));
        let request = match self.config.provider {
            Provider::Openai => request.bearer_auth(&self.api_key),
            Provider::Anthropic => request
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", "2023-06-01"),
        };
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                ClientError::Timeout(self.config.timeout_secs)
            } else {
                ClientError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(ClientError::Credential(format!(
                "provider returned {status}"
            )));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let body: Value = response
            .json()
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        self.response_text(&body)
    }
}
