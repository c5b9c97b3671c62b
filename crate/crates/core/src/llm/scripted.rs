use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, LlmError, Role};

/// When a fixture entry may fire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Fires on the n-th call to the backend, counting from 1.
    Ordinal(usize),
    /// Fires when the last user message contains the text.
    Contains(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub matcher: Option<Matcher>,
    pub response: String,
}

impl ScriptEntry {
    pub fn any(response: impl Into<String>) -> Self {
        Self {
            matcher: None,
            response: response.into(),
        }
    }

    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: Some(Matcher::Contains(needle.into())),
            response: response.into(),
        }
    }

    pub fn ordinal(n: usize, response: impl Into<String>) -> Self {
        Self {
            matcher: Some(Matcher::Ordinal(n)),
            response: response.into(),
        }
    }
}

/// Replays fixture responses. Each call returns the first unconsumed entry
/// whose matcher fires (an entry without matcher always fires).
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    consumed: Vec<bool>,
    calls: usize,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let consumed = vec![false; entries.len()];
        Self {
            entries,
            consumed,
            calls: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| LlmError::Config(format!("invalid fixture: {e}")))?;
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read fixture {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn remaining(&self) -> usize {
        self.consumed.iter().filter(|c| !**c).count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self.calls += 1;
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let fires = |m: &Option<Matcher>| match m {
            None => true,
            Some(Matcher::Ordinal(n)) => *n == self.calls,
            Some(Matcher::Contains(s)) => last_user.contains(s.as_str()),
        };
        let hit = (0..self.entries.len()).find(|&i| !self.consumed[i] && fires(&self.entries[i].matcher));
        match hit {
            Some(i) => {
                self.consumed[i] = true;
                Ok(self.entries[i].response.clone())
            }
            None if self.remaining() == 0 => Err(LlmError::FixtureExhausted {
                consumed: self.entries.len(),
            }),
            None => Err(LlmError::NoMatch {
                call: self.calls,
                excerpt: last_user.chars().take(60).collect(),
            }),
        }
    }
}
