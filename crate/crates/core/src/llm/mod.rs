//! Chat-completions backed agents: prompt templates, the HTTP client, reply
//! parsing and the [`AgentPolicy`](crate::strategy::AgentPolicy) adapter.

pub mod agent;
pub mod client;
pub mod parse;
pub mod stub;
pub mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{LlmAgent, LlmFlags};
pub use client::{ChatClient, EndpointConfig, HttpChatClient};
pub use parse::{parse_decision, DecisionSchema, ParsedDecision, ParsedValue};
pub use template::{render, RenderFlags, TemplateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("template variable '{0}' is not bound")]
    MissingVariable(String),
    #[error("malformed template: {0}")]
    BadTemplate(String),
    #[error("auth token variable '{0}' is not set")]
    AuthMissing(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("reply contains no JSON object")]
    Malformed,
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("no valid reply after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: u32, last: String },
}

impl LlmError {
    /// Parse failures are answered with a re-prompt; everything else aborts.
    pub fn is_parse_failure(&self) -> bool {
        matches!(
            self,
            LlmError::Malformed | LlmError::SchemaViolation(_) | LlmError::OutOfRange(_)
        )
    }
}

/// One request/response pair, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub agent: String,
    pub round: u32,
    pub phase: String,
    pub attempt: u32,
    pub system: String,
    pub user: String,
    pub response: Option<String>,
    pub error: Option<String>,
}
