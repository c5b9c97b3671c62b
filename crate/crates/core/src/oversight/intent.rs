//! Rule-table question intent detection.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::schema::{parse_options, AnswerSchema, LabelSpec, TemplateSchema};
use crate::toolkit::Toolkit;

const DEFAULT_TABLE: &str = include_str!("intents.json");

/// What a predicate value looks like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Kind(DomainKind),
    Labels { labels: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Boolean,
    Numeric,
    NumericList,
    IndexRange,
}

impl Domain {
    /// Label and boolean predicates can contradict; numeric ones vary with
    /// parameters by design.
    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Labels { .. } | Domain::Kind(DomainKind::Boolean))
    }
}

/// How a value is read off an observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Extractor {
    Any,
    HasEvents,
    EventThird,
    Category,
    GrangerPValue,
    GrangerDecision,
    BestLag,
    SegmentMeans,
    RealValue,
    Diagnostic(String),
}

impl TryFrom<String> for Extractor {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        Ok(match s.as_str() {
            "any" => Extractor::Any,
            "has_events" => Extractor::HasEvents,
            "event_third" => Extractor::EventThird,
            "category" => Extractor::Category,
            "granger_p_value" => Extractor::GrangerPValue,
            "granger_decision" => Extractor::GrangerDecision,
            "best_lag" => Extractor::BestLag,
            "segment_means" => Extractor::SegmentMeans,
            "real_value" => Extractor::RealValue,
            other => match other.strip_prefix("diag:") {
                Some(key) if !key.is_empty() => Extractor::Diagnostic(key.to_string()),
                _ => return Err(format!("unknown extractor '{other}'")),
            },
        })
    }
}

impl From<Extractor> for String {
    fn from(e: Extractor) -> String {
        match e {
            Extractor::Any => "any".into(),
            Extractor::HasEvents => "has_events".into(),
            Extractor::EventThird => "event_third".into(),
            Extractor::Category => "category".into(),
            Extractor::GrangerPValue => "granger_p_value".into(),
            Extractor::GrangerDecision => "granger_decision".into(),
            Extractor::BestLag => "best_lag".into(),
            Extractor::SegmentMeans => "segment_means".into(),
            Extractor::RealValue => "real_value".into(),
            Extractor::Diagnostic(k) => format!("diag:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeRule {
    /// Every subject must span its whole root series.
    Whole,
    Any,
}

/// Which observations can verify a predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingRule {
    /// Tool names; `*` accepts any tool.
    pub tools: Vec<String>,
    pub extract: Extractor,
    pub scope: ScopeRule,
}

impl BindingRule {
    pub fn accepts_tool(&self, tool: &str) -> bool {
        self.tools.iter().any(|t| t == "*" || t == tool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub name: String,
    pub domain: Domain,
    /// One instance per stored root series, named `name@root`.
    #[serde(default)]
    pub per_series: bool,
    pub binding: BindingRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemaSpec {
    Mcq {
        #[serde(default)]
        options: Vec<String>,
        #[serde(default)]
        from_question: bool,
    },
    Categorical {
        labels: Vec<LabelSpec>,
    },
    Numeric {
        tolerance: f64,
        #[serde(default)]
        relative: bool,
    },
    Template {
        #[serde(default)]
        template: Option<String>,
        #[serde(default)]
        from_question: bool,
    },
    FreeText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentRule {
    pub class: String,
    pub patterns: Vec<String>,
    pub schema: SchemaSpec,
    pub required: Vec<PredicateSpec>,
}

/// The rule table file: ordered classes plus the fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentTable {
    pub version: u32,
    pub classes: Vec<IntentRule>,
    pub fallback: IntentRule,
}

/// A required predicate of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub domain: Domain,
    pub binding: BindingRule,
    /// Set when the predicate is about one root series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub per_series: bool,
}

/// Task class, answer schema and required predicate set of a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionIntent {
    pub task: String,
    pub schema: AnswerSchema,
    pub required: Vec<Predicate>,
}

impl QuestionIntent {
    /// Expand per-series predicates over the given root names. Series
    /// named in the question come first when the question names any.
    pub fn for_series(&self, roots: &[String]) -> QuestionIntent {
        let mut required = Vec::new();
        for p in &self.required {
            if p.per_series && p.root.is_none() {
                for root in roots {
                    required.push(Predicate {
                        name: format!("{}@{root}", p.name),
                        domain: p.domain.clone(),
                        binding: p.binding.clone(),
                        root: Some(root.clone()),
                        per_series: false,
                    });
                }
            } else {
                required.push(p.clone());
            }
        }
        QuestionIntent {
            task: self.task.clone(),
            schema: self.schema.clone(),
            required,
        }
    }

    pub fn predicate(&self, name: &str) -> Option<&Predicate> {
        self.required.iter().find(|p| p.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.required.iter().map(|p| p.name.clone()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IntentTableError {
    #[error("cannot read intent table: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid intent table: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("intent class '{class}': {message}")]
    Invalid { class: String, message: String },
}

/// Compiled rule table.
#[derive(Debug, Clone)]
pub struct IntentClassifier {
    table: IntentTable,
    patterns: Vec<Vec<Regex>>,
}

impl IntentClassifier {
    pub fn from_table(table: IntentTable) -> Result<Self, IntentTableError> {
        let mut patterns = Vec::new();
        for rule in table.classes.iter().chain(std::iter::once(&table.fallback)) {
            if rule.required.is_empty() {
                return Err(IntentTableError::Invalid {
                    class: rule.class.clone(),
                    message: "required predicate set is empty".into(),
                });
            }
            let compiled = rule
                .patterns
                .iter()
                .map(|p| {
                    Regex::new(p).map_err(|e| IntentTableError::Invalid {
                        class: rule.class.clone(),
                        message: format!("bad pattern {p:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            patterns.push(compiled);
        }
        patterns.pop();
        Ok(Self { table, patterns })
    }

    pub fn from_json(text: &str) -> Result<Self, IntentTableError> {
        Self::from_table(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, IntentTableError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The shipped table.
    pub fn shipped() -> &'static IntentClassifier {
        static SHIPPED: OnceLock<IntentClassifier> = OnceLock::new();
        SHIPPED.get_or_init(|| Self::from_json(DEFAULT_TABLE).expect("shipped intent table is valid"))
    }

    pub fn table(&self) -> &IntentTable {
        &self.table
    }

    /// Check that every binding rule names registered tools.
    pub fn validate(&self, toolkit: &Toolkit) -> Result<(), IntentTableError> {
        let names = toolkit.names();
        for rule in self.table.classes.iter().chain(std::iter::once(&self.table.fallback)) {
            for p in &rule.required {
                for t in &p.binding.tools {
                    if t != "*" && !names.contains(t) {
                        return Err(IntentTableError::Invalid {
                            class: rule.class.clone(),
                            message: format!("predicate '{}' binds unknown tool '{t}'", p.name),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// First class whose any pattern matches; the fallback otherwise.
    pub fn detect(&self, question: &str) -> QuestionIntent {
        let rule = self
            .table
            .classes
            .iter()
            .zip(&self.patterns)
            .find(|(_, pats)| pats.iter().any(|p| p.is_match(question)))
            .map(|(r, _)| r)
            .unwrap_or(&self.table.fallback);
        QuestionIntent {
            task: rule.class.clone(),
            schema: resolve_schema(&rule.schema, question),
            required: rule
                .required
                .iter()
                .map(|p| Predicate {
                    name: p.name.clone(),
                    domain: p.domain.clone(),
                    binding: p.binding.clone(),
                    root: None,
                    per_series: p.per_series,
                })
                .collect(),
        }
    }
}

/// Intent of a question under the shipped rule table.
pub fn detect_question_intents(question: &str) -> QuestionIntent {
    IntentClassifier::shipped().detect(question)
}

fn resolve_schema(spec: &SchemaSpec, question: &str) -> AnswerSchema {
    match spec {
        SchemaSpec::Mcq { options, from_question } => {
            let listed = if *from_question {
                parse_options(question)
            } else {
                Vec::new()
            };
            let options = if listed.is_empty() { options.clone() } else { listed };
            if options.is_empty() {
                AnswerSchema::FreeText
            } else {
                AnswerSchema::Mcq { options }
            }
        }
        SchemaSpec::Categorical { labels } => AnswerSchema::Categorical { labels: labels.clone() },
        SchemaSpec::Numeric { tolerance, relative } => AnswerSchema::Numeric {
            tolerance: *tolerance,
            relative: *relative,
        },
        SchemaSpec::Template {
            template,
            from_question,
        } => {
            let text = if *from_question {
                TemplateSchema::extract(question)
            } else {
                template.clone()
            };
            match text.and_then(|t| TemplateSchema::parse(&t)) {
                Some(t) => AnswerSchema::Template(t),
                None => AnswerSchema::FreeText,
            }
        }
        SchemaSpec::FreeText => AnswerSchema::FreeText,
    }
}
