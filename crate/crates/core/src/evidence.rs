//! The append-only evidence log.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::toolkit::Observation;

/// A predicate value extracted from one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub predicate: String,
    pub value: Value,
    /// Root-coordinate windows the observation speaks about.
    pub scope: Vec<Scope>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scope {
    pub root: String,
    pub start: usize,
    pub end: usize,
}

impl Scope {
    pub fn contains(&self, other: &Scope) -> bool {
        self.root == other.root && self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Position in the log, from 0.
    pub index: usize,
    /// Agent step that produced the observation.
    pub step: usize,
    pub observation: Observation,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bindings: Vec<Binding>,
}

/// Observations in arrival order. Entries are never mutated or removed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceLog {
    entries: Vec<LogEntry>,
}

impl EvidenceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, step: usize, observation: Observation, bindings: Vec<Binding>) -> usize {
        let index = self.entries.len();
        self.entries.push(LogEntry {
            index,
            step,
            observation,
            bindings,
        });
        index
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> Option<&LogEntry> {
        self.entries.get(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All bindings of one predicate, with their entry index, in log order.
    pub fn bindings_of<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = (usize, &'a Binding)> + 'a {
        self.entries.iter().flat_map(move |e| {
            e.bindings
                .iter()
                .filter(move |b| b.predicate == predicate)
                .map(move |b| (e.index, b))
        })
    }
}
