//! Chat-completions transport.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::LlmError;

/// Anything that can turn a (system, user) prompt pair into reply text.
pub trait ChatClient {
    fn complete(&mut self, system: &str, user: &str) -> Result<String, LlmError>;
}

fn default_temperature() -> f64 {
    0.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Extra attempts after the first failed transport attempt.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token; no auth header when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            timeout_secs: default_timeout_secs(),
            backoff_ms: default_backoff_ms(),
            auth_env: None,
        }
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct HttpChatClient {
    config: EndpointConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatClient {
    /// Resolves the auth token up front so a missing token fails before any
    /// request is sent.
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::AuthMissing(var.clone()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(HttpChatClient {
            config,
            token,
            agent,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<String, AttemptError> {
        let mut req = self
            .agent
            .post(&self.config.url())
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => AttemptError::Timeout,
            other => AttemptError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(AttemptError::Transport(format!("HTTP {status}: {text}")));
        }
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Transport(format!("bad response body: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                AttemptError::Transport("response has no choices[0].message.content".into())
            })
    }
}

enum AttemptError {
    Timeout,
    Transport(String),
}

impl ChatClient for HttpChatClient {
    fn complete(&mut self, system: &str, user: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
        });
        let attempts = self.config.max_retries + 1;
        let mut last = AttemptError::Transport(String::new());
        for i in 0..attempts {
            if i > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (i - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    if let AttemptError::Transport(m) = &e {
                        log::warn!("chat request attempt {} of {attempts} failed: {m}", i + 1);
                    }
                    last = e;
                }
            }
        }
        Err(match last {
            AttemptError::Timeout => LlmError::Timeout { attempts },
            AttemptError::Transport(message) => LlmError::Transport { attempts, message },
        })
    }
}

/// Replays canned replies in order, cycling when exhausted. For tests and
/// dry runs.
#[derive(Debug, Clone)]
pub struct ScriptedClient {
    replies: Vec<String>,
    next: usize,
}

impl ScriptedClient {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedClient { replies, next: 0 }
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&mut self, _system: &str, _user: &str) -> Result<String, LlmError> {
        if self.replies.is_empty() {
            return Err(LlmError::Transport {
                attempts: 1,
                message: "no scripted replies".into(),
            });
        }
        let reply = self.replies[self.next % self.replies.len()].clone();
        self.next += 1;
        Ok(reply)
    }
}
