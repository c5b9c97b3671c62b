//! Chat LLM abstraction: message types, backend configuration, the HTTP and
//! scripted backends, prompt templates and the ReAct turn parser.

mod http;
pub mod parse;
pub mod prompt;
mod scripted;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use parse::{parse_turn, serialize_turn, ActionDraft, ParsedTurn, TurnKind};
pub use prompt::{
    render_critic_prompt, render_reasoner_prompt, CriticContext, StepBlock, CRITIC_MARKER, REASONER_MARKER,
};
pub use scripted::{Matcher, ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("scripted fixture exhausted after {consumed} response(s)")]
    FixtureExhausted { consumed: usize },
    #[error("no fixture entry matches call {call} (last user message starts with {excerpt:?})")]
    NoMatch { call: usize, excerpt: String },
    #[error("authentication failed (HTTP {status}); check the API key in ${env_var}")]
    Auth { status: u16, env_var: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Anything that turns a conversation into model text.
pub trait ChatBackend {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

fn default_auth_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout() -> u64 {
    120
}

/// Backend selection. Only the fields of the chosen kind are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_auth_env")]
        auth_env: String,
        #[serde(default)]
        temperature: f64,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_backoff_ms")]
        backoff_ms: u64,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Scripted {
        script_path: PathBuf,
    },
}

impl BackendConfig {
    pub fn http(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig::Http {
            endpoint: endpoint.into(),
            model: model.into(),
            auth_env: default_auth_env(),
            temperature: 0.0,
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        BackendConfig::Scripted {
            script_path: path.into(),
        }
    }

    /// Instantiate a fresh backend; scripted cursors start at the beginning.
    pub fn connect(&self) -> Result<Box<dyn ChatBackend + Send>, LlmError> {
        match self {
            BackendConfig::Http { temperature, .. } if *temperature < 0.0 => {
                Err(LlmError::Config("temperature must be non-negative".into()))
            }
            BackendConfig::Http { .. } => Ok(Box::new(HttpBackend::new(self.clone())?)),
            BackendConfig::Scripted { script_path } => Ok(Box::new(ScriptedBackend::from_file(script_path)?)),
        }
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_kinds_reject_foreign_fields() {
        let ok: BackendConfig = serde_json::from_str(r#"{"kind": "scripted", "script_path": "f.json"}"#).unwrap();
        assert_eq!(ok, BackendConfig::scripted("f.json"));
        let bad = serde_json::from_str::<BackendConfig>(
            r#"{"kind": "scripted", "script_path": "f.json", "endpoint": "http://x"}"#,
        );
        assert!(bad.is_err());
        let http: BackendConfig =
            serde_json::from_str(r#"{"kind": "http", "endpoint": "http://x", "model": "m"}"#).unwrap();
        assert_eq!(http, BackendConfig::http("http://x", "m"));
        assert!(serde_json::from_str::<BackendConfig>(r#"{"kind": "http", "model": "m"}"#).is_err());
    }
}
