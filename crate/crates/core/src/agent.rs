//! The think, act, observe loop: prompt rendering, tool dispatch, evidence
//! logging, critic feedback, the final gate and the step budget.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::evidence::EvidenceLog;
use crate::llm::{
    parse_turn, render_reasoner_prompt, BackendConfig, ChatBackend, ChatMessage, LlmError, ParsedTurn, StepBlock,
    TurnKind,
};
use crate::oversight::{
    contradictions, critic_review, extract_bindings, is_grounded, quality_gate, CoverageState, CriticInput,
    GateDecision, IntentClassifier, QuestionIntent, Reason,
};
use crate::series::SeriesStore;
use crate::toolkit::{ObsValue, Observation, ToolCall, ToolSpec, Toolkit};

/// Version tag of the serialized trace document.
pub const TRACE_VERSION: u32 = 1;

pub const DEFAULT_BUDGET: usize = 15;

const SYNTHESIZER: &str = "custom_operator";

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Maximum number of reasoner turns.
    pub budget: usize,
    /// Ask the backend for a critique after each tool step.
    pub llm_critic: bool,
    /// Intent rule table; the shipped table when absent.
    pub classifier: Option<Arc<IntentClassifier>>,
    /// When false the first proposed answer is returned whatever the gate
    /// decides. Only for ablations; the decision is still recorded.
    pub enforce_gate: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            llm_critic: true,
            classifier: None,
            enforce_gate: true,
        }
    }
}

impl AgentConfig {
    pub fn with_budget(budget: usize) -> Self {
        Self {
            budget,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("reasoner backend failed: {0}")]
    Backend(#[from] LlmError),
    #[error("step budget must be at least 1")]
    InvalidBudget,
    #[error("no series loaded")]
    EmptyStore,
}

/// One executed reasoner turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub k: usize,
    pub thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ToolCall>,
    /// Observation answering the action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    /// Log indices appended by this step, pipeline steps first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateDecision>,
    /// Verbatim text of a turn that could not be parsed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malformed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

impl Step {
    /// The step as it is replayed to the reasoner.
    pub fn block(&self) -> StepBlock {
        StepBlock {
            thought: self.thought.clone(),
            action: self.action.as_ref().map(|a| a.tool.clone()),
            action_input: self.action.as_ref().map(|a| {
                a.raw_input
                    .clone()
                    .unwrap_or_else(|| Value::Object(a.args.clone()).to_string())
            }),
            observation: self.observation.as_ref().map(render_observation),
            final_answer: self.final_answer.clone(),
            malformed: self.malformed.clone(),
            feedback: self.feedback.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub question: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Answer {
        answer: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalized: Option<String>,
    },
    /// AGENT_FAILURE: the budget ran out with these reasons unresolved.
    Failure { reasons: Vec<Reason> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    pub version: u32,
    pub intent: QuestionIntent,
    pub outcome: Outcome,
    pub trace: ReasoningTrace,
    pub log: EvidenceLog,
    pub gate_rounds: usize,
    pub llm_calls: usize,
}

impl AgentResult {
    pub fn answer(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Answer { answer, .. } => Some(answer),
            Outcome::Failure { .. } => None,
        }
    }

    pub fn normalized_answer(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Answer { normalized, .. } => normalized.as_deref(),
            Outcome::Failure { .. } => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self.outcome, Outcome::Failure { .. })
    }

    /// Structural audit of an accepted answer: the final step was accepted
    /// by the gate, re-running the gate on the log agrees, and every cited
    /// predicate is bound at the cited entry.
    pub fn check_grounding(&self) -> Result<(), String> {
        let Outcome::Answer { answer, .. } = &self.outcome else {
            return Ok(());
        };
        let last = self.trace.steps.last().ok_or("answer without steps")?;
        let gate = last.gate.as_ref().ok_or("final step carries no gate decision")?;
        if !gate.accepted() || last.final_answer.as_deref() != Some(answer.as_str()) {
            return Err("final step was not an accepted answer".into());
        }
        let again = quality_gate(&self.trace.question, &self.log, &self.intent, answer);
        if !again.accepted() {
            return Err(format!("gate rejects the logged answer: {:?}", again.reasons));
        }
        if !is_grounded(gate, &self.log, &self.intent) {
            return Err("gate cites predicates not bound in the log".into());
        }
        Ok(())
    }
}

fn fmt_num(x: f64) -> String {
    if !x.is_finite() || x == x.trunc() && x.abs() < 1e15 {
        return format!("{x}");
    }
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" || s == "0" && x != 0.0 {
        format!("{x:e}")
    } else {
        s.to_string()
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| fmt_num(x)).collect();
    format!("[{}]", parts.join(", "))
}

/// Observation text for the reasoner prompt. Scalars, labels and index sets
/// are verbatim; series are summarized, never dumped.
pub fn render_observation(obs: &Observation) -> String {
    let body = match &obs.value {
        ObsValue::Real { value } => format!("{value}"),
        ObsValue::Stats { mean, std, min, max, n } => format!(
            "mean {}, std {}, min {}, max {}, n {n}",
            fmt_num(*mean),
            fmt_num(*std),
            fmt_num(*min),
            fmt_num(*max)
        ),
        ObsValue::Category { label } => label.clone(),
        ObsValue::IndexSet { indices, events, .. } => {
            let idx: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
            let mut text = format!("[{}]", idx.join(", "));
            let spans: Vec<String> = events
                .iter()
                .filter(|e| e.end > e.start + 1)
                .map(|e| format!("{:?} [{}, {})", e.kind, e.start, e.end).to_lowercase())
                .collect();
            if !spans.is_empty() {
                text.push_str(&format!(" spans: {}", spans.join(", ")));
            }
            text
        }
        ObsValue::CrossCorrelation {
            best_lag,
            best_value,
            lags,
            ..
        } => format!(
            "best lag {best_lag} with correlation {} (lags {}..={})",
            fmt_num(*best_value),
            lags.first().copied().unwrap_or(0),
            lags.last().copied().unwrap_or(0)
        ),
        ObsValue::Granger {
            p_value,
            f_statistic,
            decision,
            maxlag,
        } => format!(
            "p-value {}, F {}, maxlag {maxlag}, decision: {decision}",
            fmt_num(*p_value),
            fmt_num(*f_statistic)
        ),
        ObsValue::Meta { meta } => serde_json::to_string(meta).expect("meta serializes"),
        ObsValue::Registered { spec, .. } => format!(
            "registered new tool {}: {}",
            spec.name,
            serde_json::to_string(spec).expect("spec serializes")
        ),
        ObsValue::Error { message, .. } => {
            format!("Error when calling {}: {message}", obs.source.tool)
        }
        ObsValue::Series { series } => series
            .iter()
            .map(|r| {
                let channels: Vec<String> = r
                    .summary
                    .iter()
                    .map(|c| {
                        format!(
                            "{}: mean {}, std {}, min {}, max {}, first {} last {}",
                            c.channel,
                            fmt_num(c.mean),
                            c.std.map_or("n/a".into(), fmt_num),
                            fmt_num(c.min),
                            fmt_num(c.max),
                            fmt_list(&c.head),
                            fmt_list(&c.tail)
                        )
                    })
                    .collect();
                format!(
                    "series '{}' (length {}, positions {}..{} of its parent; {})",
                    r.name,
                    r.length,
                    r.start,
                    r.end,
                    channels.join("; ")
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
    };
    if obs.diagnostics.is_empty() || obs.is_error() {
        body
    } else {
        format!("{body} {}", Value::Object(obs.diagnostics.clone()))
    }
}

struct Counting<'a> {
    inner: &'a mut dyn ChatBackend,
    calls: &'a mut usize,
}

impl ChatBackend for Counting<'_> {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        *self.calls += 1;
        self.inner.complete(messages)
    }
}

/// Run state of one question. Driven turn by turn with [`AgentRun::advance`].
pub struct AgentRun {
    question: String,
    intent: QuestionIntent,
    store: SeriesStore,
    toolkit: Toolkit,
    specs: Vec<ToolSpec>,
    log: EvidenceLog,
    steps: Vec<Step>,
    gate_rounds: usize,
    llm_calls: usize,
    config: AgentConfig,
    outcome: Option<Outcome>,
}

impl AgentRun {
    pub fn new(question: &str, store: SeriesStore, config: AgentConfig) -> Result<Self, AgentError> {
        if config.budget == 0 {
            return Err(AgentError::InvalidBudget);
        }
        if store.is_empty() {
            return Err(AgentError::EmptyStore);
        }
        let base = match &config.classifier {
            Some(c) => c.detect(question),
            None => IntentClassifier::shipped().detect(question),
        };
        let intent = base.for_series(&store.root_names());
        let toolkit = Toolkit::new();
        let specs = toolkit.specs().cloned().collect();
        Ok(Self {
            question: question.to_string(),
            intent,
            store,
            toolkit,
            specs,
            log: EvidenceLog::new(),
            steps: Vec::new(),
            gate_rounds: 0,
            llm_calls: 0,
            config,
            outcome: None,
        })
    }

    pub fn intent(&self) -> &QuestionIntent {
        &self.intent
    }

    pub fn log(&self) -> &EvidenceLog {
        &self.log
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn llm_calls(&self) -> usize {
        self.llm_calls
    }

    pub fn gate_rounds(&self) -> usize {
        self.gate_rounds
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    /// Current reasoner prompt.
    pub fn prompt(&self) -> Vec<ChatMessage> {
        let blocks: Vec<StepBlock> = self.steps.iter().map(Step::block).collect();
        render_reasoner_prompt(&self.specs, &self.question, &blocks)
    }

    /// One reasoner turn: complete, parse, then act or face the gate.
    pub fn advance(&mut self, backend: &mut dyn ChatBackend) -> Result<&Step, AgentError> {
        debug_assert!(!self.is_finished());
        let k = self.steps.len() + 1;
        let prompt = self.prompt();
        let reply = Counting {
            inner: &mut *backend,
            calls: &mut self.llm_calls,
        }
        .complete(&prompt)?;
        let turn = parse_turn(&reply);
        let step = match turn.kind {
            TurnKind::FinalAnswer => self.judge(k, turn),
            TurnKind::Malformed => Step {
                k,
                thought: turn.thought,
                action: None,
                observation: None,
                entries: Vec::new(),
                final_answer: None,
                gate: None,
                malformed: Some(turn.raw),
                feedback: turn.diagnostic,
            },
            TurnKind::ThoughtAction => self.execute_step(k, turn, backend),
        };
        self.steps.push(step);
        if self.outcome.is_none() && self.steps.len() >= self.config.budget {
            self.outcome = Some(Outcome::Failure {
                reasons: self.unresolved(),
            });
        }
        Ok(self.steps.last().expect("just pushed"))
    }

    fn judge(&mut self, k: usize, turn: ParsedTurn) -> Step {
        let answer = turn.final_answer.unwrap_or_default();
        let decision = quality_gate(&self.question, &self.log, &self.intent, &answer);
        self.gate_rounds += 1;
        let feedback = if decision.accepted() || !self.config.enforce_gate {
            self.outcome = Some(Outcome::Answer {
                answer: answer.clone(),
                normalized: decision.normalized.clone(),
            });
            None
        } else {
            Some(decision.feedback())
        };
        Step {
            k,
            thought: turn.thought,
            action: None,
            observation: None,
            entries: Vec::new(),
            final_answer: Some(answer),
            gate: Some(decision),
            malformed: None,
            feedback,
        }
    }

    /// Dispatch a parsed action, log every resulting observation with its
    /// bindings, and attach the critic's review.
    pub fn execute_step(&mut self, k: usize, turn: ParsedTurn, backend: &mut dyn ChatBackend) -> Step {
        let draft = turn.action.expect("thought+action turn carries an action");
        let synthesizer = draft.tool == SYNTHESIZER;
        let dispatch = {
            let mut counted = Counting {
                inner: &mut *backend,
                calls: &mut self.llm_calls,
            };
            self.toolkit.dispatch(
                &draft.tool,
                &draft.input,
                Some(&draft.raw_input),
                &mut self.store,
                Some(&mut counted),
            )
        };
        if let crate::toolkit::ObsValue::Registered { spec, .. } = &dispatch.primary.value {
            self.specs.push(spec.clone());
        }
        let mut entries = Vec::new();
        let mut primary = None;
        for obs in dispatch.into_observations() {
            let bindings = extract_bindings(&obs, &self.intent);
            entries.push(self.log.append(k, obs.clone(), bindings));
            primary = Some(obs);
        }
        let observation = primary.expect("dispatch yields a primary observation");
        let mut step = Step {
            k,
            thought: turn.thought,
            action: Some(observation.source.clone()),
            observation: Some(observation),
            entries,
            final_answer: None,
            gate: None,
            malformed: None,
            feedback: None,
        };
        let step_text = step.block().render();
        let input = CriticInput {
            question: &self.question,
            intent: &self.intent,
            log: &self.log,
            step_text: &step_text,
            observation: step.observation.as_ref().expect("set above"),
        };
        let mut counted = Counting {
            inner: backend,
            calls: &mut self.llm_calls,
        };
        let llm: Option<&mut dyn ChatBackend> =
            (self.config.llm_critic && !synthesizer).then_some(&mut counted as &mut dyn ChatBackend);
        let (feedback, error) = critic_review(&input, llm);
        if let Some(e) = error {
            log::debug!("step {k}: critic LLM skipped ({e})");
        }
        step.feedback = Some(feedback);
        step
    }

    /// Reasons left open when the budget runs out: the gap set and any
    /// unresolved contradiction, else the last gate rejection.
    fn unresolved(&self) -> Vec<Reason> {
        let state = CoverageState::from_log(&self.log, &self.intent);
        let mut reasons: Vec<Reason> = state
            .gaps
            .iter()
            .map(|g| Reason::MissingPredicate {
                predicate: g.clone(),
                tools: self
                    .intent
                    .predicate(g)
                    .map(|p| p.binding.tools.clone())
                    .unwrap_or_default(),
            })
            .collect();
        reasons.extend(
            contradictions(&self.log, &self.intent)
                .into_iter()
                .filter(|c| !c.is_resolved())
                .map(|c| Reason::Contradiction {
                    predicate: c.predicate,
                    first: c.first,
                    second: c.second,
                }),
        );
        if reasons.is_empty() {
            reasons = self
                .steps
                .iter()
                .rev()
                .find_map(|s| s.gate.as_ref())
                .map(|g| g.reasons.clone())
                .unwrap_or_default();
        }
        if reasons.is_empty() {
            reasons.push(Reason::NoAnswer);
        }
        reasons
    }

    pub fn finish(self) -> AgentResult {
        AgentResult {
            version: TRACE_VERSION,
            intent: self.intent,
            outcome: self.outcome.unwrap_or(Outcome::Failure {
                reasons: vec![Reason::NoAnswer],
            }),
            trace: ReasoningTrace {
                question: self.question,
                steps: self.steps,
            },
            log: self.log,
            gate_rounds: self.gate_rounds,
            llm_calls: self.llm_calls,
        }
    }
}

/// Run the loop to completion against an open backend.
pub fn run_with_backend(
    question: &str,
    store: SeriesStore,
    backend: &mut dyn ChatBackend,
    config: AgentConfig,
) -> Result<AgentResult, AgentError> {
    let mut run = AgentRun::new(question, store, config)?;
    while !run.is_finished() {
        run.advance(backend)?;
    }
    Ok(run.finish())
}

/// Connect to the configured backend and answer one question.
pub fn run_agent(
    question: &str,
    store: SeriesStore,
    backend: &BackendConfig,
    budget: usize,
) -> Result<AgentResult, AgentError> {
    let mut b = backend.connect()?;
    run_with_backend(question, store, &mut b, AgentConfig::with_budget(budget))
}

pub fn serialize_trace(result: &AgentResult) -> Value {
    serde_json::to_value(result).expect("trace serializes")
}

/// Pretty JSON text of a trace, as written to trace files.
pub fn trace_to_string(result: &AgentResult) -> String {
    serde_json::to_string_pretty(result).expect("trace serializes")
}

pub fn deserialize_trace(text: &str) -> Result<AgentResult, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptEntry, ScriptedBackend, REASONER_MARKER};
    use crate::series::TimeSeries;
    use crate::toolkit::{ChannelSummary, Event, EventKind, OutputKind, SeriesRef, Subject};
    use serde_json::Map;

    fn obs(value: ObsValue) -> Observation {
        Observation {
            seq: 1,
            kind: value.kind(),
            value,
            diagnostics: Map::new(),
            source: ToolCall {
                tool: "t".into(),
                args: Map::new(),
                raw_input: None,
            },
            subjects: Vec::<Subject>::new(),
        }
    }

    #[test]
    fn renders_scalars_verbatim() {
        assert_eq!(render_observation(&obs(ObsValue::Real { value: 0.83 })), "0.83");
        assert_eq!(
            render_observation(&obs(ObsValue::IndexSet {
                indices: vec![388],
                events: vec![Event {
                    start: 388,
                    end: 389,
                    kind: EventKind::Spike,
                    score: 9.0
                }],
                length: 744
            })),
            "[388]"
        );
        let mut e = obs(ObsValue::Error {
            message: "x must be 1-D".into(),
            usage: None,
        });
        e.kind = OutputKind::Error;
        e.source.tool = "anomaly_classifier".into();
        assert_eq!(
            render_observation(&e),
            "Error when calling anomaly_classifier: x must be 1-D"
        );
    }

    #[test]
    fn series_are_summarized() {
        let head: Vec<f64> = (0..5).map(f64::from).collect();
        let tail: Vec<f64> = (995..1000).map(f64::from).collect();
        let text = render_observation(&obs(ObsValue::Series {
            series: vec![SeriesRef {
                name: "a#slice_series#0".into(),
                length: 1000,
                start: 0,
                end: 1000,
                summary: vec![ChannelSummary {
                    channel: "value".into(),
                    mean: 499.5,
                    std: Some(288.8),
                    min: 0.0,
                    max: 999.0,
                    head,
                    tail,
                }],
            }],
        }));
        assert!(text.contains("length 1000"));
        assert!(text.contains("first [0, 1, 2, 3, 4] last [995, 996, 997, 998, 999]"));
        assert!(!text.contains("500,"));
    }

    fn ramp_store() -> SeriesStore {
        let mut store = SeriesStore::new();
        let values: Vec<f64> = (0..60).map(|i| i as f64 * 0.5).collect();
        store.insert(TimeSeries::from_values("a", values).unwrap()).unwrap();
        store
    }

    fn reasoner(text: &str) -> ScriptEntry {
        ScriptEntry::contains(REASONER_MARKER, text)
    }

    const Q: &str = "Is the trend of series a upward, downward or flat?";

    #[test]
    fn answers_after_two_tool_calls() {
        let mut b = ScriptedBackend::new(vec![
            reasoner("Thought: inspect\nAction: series_info\nAction Input: {\"name\": \"a\"}"),
            reasoner("Thought: classify\nAction: trend_classifier\nAction Input: {\"name\": \"a\"}"),
            reasoner("Thought: the trend is rising\nFinal Answer: up"),
        ]);
        let r = run_with_backend(Q, ramp_store(), &mut b, AgentConfig::default()).unwrap();
        assert_eq!(r.answer(), Some("up"));
        assert_eq!(r.trace.steps.len(), 3);
        assert_eq!(r.gate_rounds, 1);
        assert!(r.check_grounding().is_ok());
        assert!(r.llm_calls <= 2 * 3 + r.gate_rounds);
        let f = r.trace.steps[1].feedback.as_deref().unwrap();
        assert!(f.contains("evidence is sufficient"), "{f}");
    }

    #[test]
    fn early_answer_is_rejected_then_recovered() {
        let mut b = ScriptedBackend::new(vec![
            reasoner("Thought: obviously rising\nFinal Answer: up"),
            reasoner("Thought: check\nAction: trend_classifier\nAction Input: {\"name\": \"a\"}"),
            reasoner("Thought: confirmed\nFinal Answer: up"),
        ]);
        let r = run_with_backend(Q, ramp_store(), &mut b, AgentConfig::default()).unwrap();
        assert_eq!(r.answer(), Some("up"));
        assert_eq!(r.gate_rounds, 2);
        let first = r.trace.steps[0].feedback.as_deref().unwrap();
        assert!(first.contains("trend_direction"));
        assert!(r.check_grounding().is_ok());
    }

    #[test]
    fn budget_one_fails_with_all_of_r() {
        let mut b = ScriptedBackend::new(vec![reasoner("Final Answer: up")]);
        let r = run_with_backend(Q, ramp_store(), &mut b, AgentConfig::with_budget(1)).unwrap();
        let Outcome::Failure { reasons } = &r.outcome else {
            panic!("expected failure");
        };
        let missing: Vec<String> = reasons
            .iter()
            .filter_map(|x| match x {
                Reason::MissingPredicate { predicate, .. } => Some(predicate.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(missing, r.intent.names());
    }

    #[test]
    fn error_step_feedback_carries_usage() {
        let mut b = ScriptedBackend::new(vec![reasoner(
            "Thought: go\nAction: trend_classifier\nAction Input: {\"name\": \"missing\"}",
        )]);
        let r = run_with_backend(Q, ramp_store(), &mut b, AgentConfig::with_budget(1)).unwrap();
        let step = &r.trace.steps[0];
        assert!(step.observation.as_ref().unwrap().is_error());
        assert!(step.feedback.as_deref().unwrap().contains("The correct usage is"));
        assert_eq!(r.log.len(), 1);
    }

    #[test]
    fn malformed_turn_gets_parser_diagnostic() {
        let mut b = ScriptedBackend::new(vec![reasoner("I think it goes up")]);
        let r = run_with_backend(Q, ramp_store(), &mut b, AgentConfig::with_budget(1)).unwrap();
        let step = &r.trace.steps[0];
        assert!(step.action.is_none());
        assert!(step.feedback.as_deref().unwrap().starts_with("missing"));
        assert!(r.log.is_empty());
    }

    #[test]
    fn transport_failure_is_not_agent_failure() {
        let mut b = ScriptedBackend::new(vec![]);
        let e = run_with_backend(Q, ramp_store(), &mut b, AgentConfig::default()).unwrap_err();
        assert!(matches!(e, AgentError::Backend(_)));
    }

    #[test]
    fn trace_round_trips() {
        let mut b = ScriptedBackend::new(vec![
            reasoner("Thought: check\nAction: trend_classifier\nAction Input: {\"name\": \"a\"}"),
            reasoner("Final Answer: up"),
        ]);
        let r = run_with_backend(Q, ramp_store(), &mut b, AgentConfig::default()).unwrap();
        let text = trace_to_string(&r);
        assert_eq!(deserialize_trace(&text).unwrap(), r);
        assert_eq!(serialize_trace(&r)["version"], 1);
    }
}
