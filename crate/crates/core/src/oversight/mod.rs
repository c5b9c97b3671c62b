//! Oversight: question intent, predicate coverage, the step critic and the
//! final quality gate.

mod coverage;
mod intent;
mod schema;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use coverage::{
    bind_predicates, contradictions, extract_bindings, observation_scope, Contradiction, CoverageState,
};
pub use intent::{
    detect_question_intents, BindingRule, Domain, DomainKind, Extractor, IntentClassifier, IntentRule, IntentTable,
    IntentTableError, Predicate, PredicateSpec, QuestionIntent, SchemaSpec, ScopeRule,
};
pub use schema::{normalize_text, parse_options, AnswerSchema, LabelSpec, Slot, TemplateSchema};

use crate::evidence::EvidenceLog;
use crate::llm::{render_critic_prompt, ChatBackend, CriticContext, LlmError};
use crate::toolkit::Observation;

/// Reserved final answer declaring the question undecidable.
pub const UNDECIDABLE: &str = "UNDECIDABLE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

/// A concrete rejection reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reason {
    MissingPredicate {
        predicate: String,
        /// Tools whose observations can bind it.
        tools: Vec<String>,
    },
    SchemaViolation {
        detail: String,
    },
    Contradiction {
        predicate: String,
        first: usize,
        second: usize,
    },
    /// The step budget ran out before any answer was proposed.
    NoAnswer,
    /// The reasoner kept producing unparseable turns.
    MalformedOutput {
        count: usize,
    },
}

impl Reason {
    pub fn describe(&self) -> String {
        match self {
            Reason::MissingPredicate { predicate, tools } => format!(
                "missing evidence for '{predicate}' (tools that can supply it: {})",
                tools.join(", ")
            ),
            Reason::SchemaViolation { detail } => format!("answer format: {detail}"),
            Reason::Contradiction { predicate, first, second } => format!(
                "log entries {first} and {second} disagree on '{predicate}'; rerun on a wider window or with different parameters"
            ),
            Reason::NoAnswer => "no final answer was proposed within the step budget".into(),
            Reason::MalformedOutput { count } => {
                format!("{count} consecutive turns could not be parsed")
            }
        }
    }
}

/// The log entry that grounds one covered predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub predicate: String,
    pub entry: usize,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<Reason>,
    /// For accepted answers, the latest supporting entry of each predicate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<Support>,
    /// Schema-normalized form of the answer, when it is in schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<String>,
}

impl GateDecision {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accept
    }

    /// Feedback text handed back to the reasoner after a rejection.
    pub fn feedback(&self) -> String {
        let lines: Vec<String> = self.reasons.iter().map(|r| format!("- {}", r.describe())).collect();
        format!(
            "The final answer was rejected by the quality gate:\n{}\nGather the missing evidence with tool calls before answering again.",
            lines.join("\n")
        )
    }
}

fn missing(intent: &QuestionIntent, state: &CoverageState) -> Vec<Reason> {
    state
        .gaps
        .iter()
        .map(|g| Reason::MissingPredicate {
            predicate: g.clone(),
            tools: intent.predicate(g).map(|p| p.binding.tools.clone()).unwrap_or_default(),
        })
        .collect()
}

/// Accept only an in-schema answer whose every required predicate is bound
/// in the log with no unresolved contradiction. `UNDECIDABLE` is accepted
/// only when the log holds a contradiction that reruns failed to settle.
pub fn quality_gate(question: &str, log: &EvidenceLog, intent: &QuestionIntent, answer: &str) -> GateDecision {
    let _ = question;
    let state = CoverageState::from_log(log, intent);
    let conflicts = contradictions(log, intent);
    let open: Vec<&Contradiction> = conflicts.iter().filter(|c| !c.is_resolved()).collect();
    let mut reasons = Vec::new();
    let mut normalized = None;
    if answer.trim().eq_ignore_ascii_case(UNDECIDABLE) {
        if open.iter().any(|c| c.is_unresolvable()) {
            return GateDecision {
                verdict: Verdict::Accept,
                reasons: Vec::new(),
                support: support(log, intent),
                normalized: Some(UNDECIDABLE.into()),
            };
        }
        reasons.push(Reason::SchemaViolation {
            detail: format!("{UNDECIDABLE} is accepted only when reruns failed to settle a contradiction in the log"),
        });
    } else {
        match intent.schema.normalize(answer) {
            Ok(n) => normalized = Some(n),
            Err(detail) => reasons.push(Reason::SchemaViolation {
                detail: format!("{detail}; expected {}", intent.schema.describe()),
            }),
        }
    }
    reasons.extend(missing(intent, &state));
    reasons.extend(open.iter().map(|c| Reason::Contradiction {
        predicate: c.predicate.clone(),
        first: c.first,
        second: c.second,
    }));
    if reasons.is_empty() {
        GateDecision {
            verdict: Verdict::Accept,
            reasons,
            support: support(log, intent),
            normalized,
        }
    } else {
        GateDecision {
            verdict: Verdict::Reject,
            reasons,
            support: Vec::new(),
            normalized,
        }
    }
}

fn support(log: &EvidenceLog, intent: &QuestionIntent) -> Vec<Support> {
    intent
        .required
        .iter()
        .filter_map(|p| {
            log.bindings_of(&p.name).last().map(|(entry, b)| Support {
                predicate: p.name.clone(),
                entry,
                value: b.value.clone(),
            })
        })
        .collect()
}

/// Check that every supported predicate of a decision is really bound at
/// the cited log entry.
pub fn is_grounded(decision: &GateDecision, log: &EvidenceLog, intent: &QuestionIntent) -> bool {
    if !decision.accepted() {
        return true;
    }
    let cited = |name: &str| decision.support.iter().find(|s| s.predicate == name);
    let undecidable = decision.normalized.as_deref() == Some(UNDECIDABLE);
    intent.required.iter().all(|p| match cited(&p.name) {
        Some(s) => log.get(s.entry).is_some_and(|e| {
            e.bindings
                .iter()
                .any(|b| b.predicate == s.predicate && b.value == s.value)
        }),
        None => undecidable,
    })
}

/// What the critic reviews for one executed step.
pub struct CriticInput<'a> {
    pub question: &'a str,
    pub intent: &'a QuestionIntent,
    pub log: &'a EvidenceLog,
    /// The step rendered as it will appear in the reasoner prompt.
    pub step_text: &'a str,
    pub observation: &'a Observation,
}

/// Deterministic critic checks: relayed errors with the tool schema, tool
/// suitability, contradictions and the remaining gap set.
pub fn deterministic_review(input: &CriticInput) -> String {
    let obs = input.observation;
    let mut lines = Vec::new();
    if let crate::toolkit::ObsValue::Error { message, usage } = &obs.value {
        let call_input = obs
            .source
            .raw_input
            .clone()
            .unwrap_or_else(|| Value::Object(obs.source.args.clone()).to_string());
        let mut line = format!("Error calling {}, Input: {call_input}, {message}.", obs.source.tool);
        if let Some(usage) = usage {
            line.push_str(&format!(" The correct usage is {usage}."));
        }
        lines.push(line);
    }
    let state = CoverageState::from_log(input.log, input.intent);
    if !obs.is_error() && !state.gaps.is_empty() {
        let useful = input
            .intent
            .required
            .iter()
            .any(|p| p.binding.accepts_tool(&obs.source.tool));
        if !useful {
            lines.push(format!(
                "{} does not verify any predicate this {} question needs.",
                obs.source.tool, input.intent.task
            ));
        }
    }
    let open: Vec<Contradiction> = contradictions(input.log, input.intent)
        .into_iter()
        .filter(|c| !c.is_resolved())
        .collect();
    for c in &open {
        lines.push(format!(
            "Contradiction: log entries {} and {} bind '{}' to {} and {}. Rerun on a wider window or with different parameters to settle it.",
            c.first, c.second, c.predicate, c.values.0, c.values.1
        ));
    }
    if state.gaps.is_empty() {
        if open.is_empty() {
            lines.push(format!(
                "All required predicates are covered; the evidence is sufficient for a final answer ({}).",
                input.intent.schema.describe()
            ));
        }
    } else {
        let gaps: Vec<String> = state
            .gaps
            .iter()
            .map(|g| {
                let tools = input
                    .intent
                    .predicate(g)
                    .map(|p| p.binding.tools.join(", "))
                    .unwrap_or_default();
                format!("{g} (via {tools})")
            })
            .collect();
        lines.push(format!("Outstanding predicates: {}.", gaps.join("; ")));
    }
    lines.join(" ")
}

/// Critic context for the LLM layer.
pub fn critic_context(input: &CriticInput) -> CriticContext {
    let state = CoverageState::from_log(input.log, input.intent);
    CriticContext {
        question: input.question.to_string(),
        task: input.intent.task.clone(),
        schema: input.intent.schema.describe(),
        gaps: state.gaps,
        step: input.step_text.to_string(),
        log: input
            .log
            .entries()
            .iter()
            .map(|e| format!("[{}] {}", e.index, crate::agent::render_observation(&e.observation)))
            .collect(),
    }
}

/// Both critic layers merged. The LLM layer runs when a backend is given;
/// its failure leaves the deterministic layer alone.
pub fn critic_review(input: &CriticInput, backend: Option<&mut dyn ChatBackend>) -> (String, Option<LlmError>) {
    let mut text = deterministic_review(input);
    let mut error = None;
    if let Some(backend) = backend {
        match backend.complete(&render_critic_prompt(&critic_context(input))) {
            Ok(reply) => {
                let reply = reply.trim();
                if !reply.is_empty() {
                    text.push(' ');
                    text.push_str(reply);
                }
            }
            Err(e) => {
                log::debug!("critic LLM unavailable, deterministic review only: {e}");
                error = Some(e);
            }
        }
    }
    (text, error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolkit::{ObsValue, OutputKind, Subject, ToolCall};
    use serde_json::{json, Map};

    fn observation(tool: &str, value: ObsValue) -> Observation {
        Observation {
            seq: 1,
            kind: value.kind(),
            value,
            diagnostics: Map::new(),
            source: ToolCall {
                tool: tool.into(),
                args: Map::new(),
                raw_input: None,
            },
            subjects: vec![Subject {
                series: "a".into(),
                root: "a".into(),
                window: (0, 60),
                root_length: 60,
            }],
        }
    }

    fn logged(intent: &QuestionIntent, items: Vec<Observation>) -> EvidenceLog {
        let mut log = EvidenceLog::new();
        for o in items {
            let b = extract_bindings(&o, intent);
            log.append(1, o, b);
        }
        log
    }

    const TREND_Q: &str = "Does the series show an upward, downward or flat trend?";

    #[test]
    fn mcq_out_of_options_rejected() {
        let mut intent = detect_question_intents("Where does an anomaly occur?");
        intent.schema = AnswerSchema::Mcq {
            options: ["A", "B", "C", "D"].map(String::from).to_vec(),
        };
        let d = quality_gate("q", &EvidenceLog::new(), &intent, "E");
        assert!(!d.accepted());
        assert!(matches!(d.reasons[0], Reason::SchemaViolation { .. }));
    }

    #[test]
    fn empty_log_rejects_with_all_of_r() {
        let intent = detect_question_intents(TREND_Q);
        let d = quality_gate(TREND_Q, &EvidenceLog::new(), &intent, "up");
        let missing: Vec<&str> = d
            .reasons
            .iter()
            .filter_map(|r| match r {
                Reason::MissingPredicate { predicate, .. } => Some(predicate.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(missing, intent.names());
        assert!(d.feedback().contains("trend_direction"));
    }

    #[test]
    fn covered_in_schema_accepts_and_is_grounded() {
        let intent = detect_question_intents(TREND_Q);
        let log = logged(
            &intent,
            vec![observation(
                "trend_classifier",
                ObsValue::Category { label: "up".into() },
            )],
        );
        let d = quality_gate(TREND_Q, &log, &intent, "The trend is upward.");
        assert!(d.accepted(), "{d:?}");
        assert_eq!(d.normalized.as_deref(), Some("up"));
        assert!(is_grounded(&d, &log, &intent));
    }

    #[test]
    fn contradiction_blocks_and_undecidable_needs_failed_rerun() {
        let intent = detect_question_intents(TREND_Q);
        let cat = |l: &str| observation("trend_classifier", ObsValue::Category { label: l.into() });
        let log = logged(&intent, vec![cat("up"), cat("down")]);
        let d = quality_gate(TREND_Q, &log, &intent, "up");
        assert!(d.reasons.iter().any(|r| matches!(r, Reason::Contradiction { .. })));
        assert!(!quality_gate(TREND_Q, &log, &intent, UNDECIDABLE).accepted());
        let log = logged(&intent, vec![cat("up"), cat("down"), cat("up")]);
        let d = quality_gate(TREND_Q, &log, &intent, UNDECIDABLE);
        assert!(d.accepted(), "{d:?}");
    }

    #[test]
    fn critic_relays_error_with_usage() {
        let intent = detect_question_intents("In which part of the time series does the anomaly occur?");
        let mut o = observation(
            "anomaly_classifier",
            ObsValue::Error {
                message: "x must be 1-D".into(),
                usage: Some(json!({"parameters": [{"name": "name", "required": true}]})),
            },
        );
        o.kind = OutputKind::Error;
        o.source.raw_input = Some("{Solar panel 1, Solar panel 2}".into());
        let log = logged(&intent, vec![o.clone()]);
        let input = CriticInput {
            question: "q",
            intent: &intent,
            log: &log,
            step_text: "",
            observation: &o,
        };
        let text = deterministic_review(&input);
        assert!(text.starts_with(
            "Error calling anomaly_classifier, Input: {Solar panel 1, Solar panel 2}, x must be 1-D. The correct usage is {\"parameters\""
        ));
        assert!(text.contains("Outstanding predicates: has_anomaly"));
    }

    #[test]
    fn critic_reports_sufficiency_and_contradictions() {
        let intent = detect_question_intents(TREND_Q);
        let up = observation("trend_classifier", ObsValue::Category { label: "up".into() });
        let log = logged(&intent, vec![up.clone()]);
        let input = CriticInput {
            question: TREND_Q,
            intent: &intent,
            log: &log,
            step_text: "",
            observation: &up,
        };
        assert!(deterministic_review(&input).contains("evidence is sufficient"));
        let down = observation("trend_classifier", ObsValue::Category { label: "down".into() });
        let log = logged(&intent, vec![up, down.clone()]);
        let input = CriticInput {
            question: TREND_Q,
            intent: &intent,
            log: &log,
            step_text: "",
            observation: &down,
        };
        assert!(deterministic_review(&input).contains("Contradiction: log entries 0 and 1"));
    }

    #[test]
    fn critic_llm_failure_degrades() {
        let intent = detect_question_intents(TREND_Q);
        let up = observation("trend_classifier", ObsValue::Category { label: "up".into() });
        let log = logged(&intent, vec![up.clone()]);
        let input = CriticInput {
            question: TREND_Q,
            intent: &intent,
            log: &log,
            step_text: "",
            observation: &up,
        };
        let mut empty = crate::llm::ScriptedBackend::new(vec![]);
        let (text, err) = critic_review(&input, Some(&mut empty));
        assert_eq!(text, deterministic_review(&input));
        assert!(err.is_some());
    }
}
