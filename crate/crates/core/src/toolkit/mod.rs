//! The analytical tool library: typed specs, argument validation, dispatch
//! and the typed observations every tool call produces.

pub mod args;
pub mod custom;
pub mod detect;
pub mod numeric;
pub mod process;
pub mod relate;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::llm::ChatBackend;
use crate::series::{SeriesError, SeriesMeta, SeriesStore, TimeSeries};
use crate::stats;

pub use args::{bind, resolve_bound, resolve_point, ArgInput, Args};
pub use custom::{Pipeline, PipelineStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Proc,
    Det,
    Num,
    Rel,
    Custom,
}

impl Family {
    /// Output kinds a tool of this family may declare.
    pub fn allows(self, kind: OutputKind) -> bool {
        use OutputKind::*;
        match self {
            Family::Proc => kind == Series,
            Family::Det => matches!(kind, Category | IndexSet),
            Family::Num => matches!(kind, Real | Series | Meta),
            Family::Rel => matches!(kind, Real | Relation),
            Family::Custom => kind != Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    Series,
    Real,
    Category,
    IndexSet,
    Relation,
    Meta,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    /// Name of a stored series.
    Series,
    Int,
    /// Non-negative integer.
    Count,
    Real,
    Text,
    Choice(Vec<String>),
    /// Position or timestamp.
    Locator,
    /// Pair of locators `[start, end)`.
    Range,
    CountList,
    /// Channel name or position.
    Channel,
}

impl ParamType {
    pub fn describe(&self) -> String {
        match self {
            ParamType::Series => "series name".into(),
            ParamType::Int => "integer".into(),
            ParamType::Count => "non-negative integer".into(),
            ParamType::Real => "number".into(),
            ParamType::Text => "text".into(),
            ParamType::Choice(options) => format!("one of [{}]", options.join(", ")),
            ParamType::Locator => "position or timestamp".into(),
            ParamType::Range => "[start, end] pair of positions or timestamps".into(),
            ParamType::CountList => "list of non-negative integers".into(),
            ParamType::Channel => "channel name or position".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl ParamSpec {
    pub fn required(name: &str, ty: ParamType, description: &str) -> Self {
        Self {
            name: name.into(),
            ty,
            required: true,
            default: None,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, ty: ParamType, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, ty, description)
        }
    }

    pub fn with_default(name: &str, ty: ParamType, default: Value, description: &str) -> Self {
        Self {
            default: Some(default),
            ..Self::optional(name, ty, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub family: Family,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
    pub output: OutputKind,
}

impl ToolSpec {
    /// Parameter schema quoted back to the model after a failed call.
    pub fn usage(&self) -> Value {
        json!({
            "parameters": self
                .parameters
                .iter()
                .map(|p| json!({"name": p.name, "required": p.required}))
                .collect::<Vec<_>>()
        })
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Structural checks: unique parameter names, non-empty description and
    /// an output kind the family permits.
    pub fn validate(&self) -> Result<(), String> {
        if self.description.trim().is_empty() {
            return Err(format!("tool '{}' has an empty description", self.name));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(format!("tool '{}' declares parameter '{}' twice", self.name, p.name));
            }
        }
        if !self.family.allows(self.output) {
            return Err(format!(
                "tool '{}' of family {:?} cannot produce {:?}",
                self.name, self.family, self.output
            ));
        }
        Ok(())
    }
}

/// A validated action: tool name plus bound arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub args: Map<String, Value>,
    /// Argument text exactly as the model wrote it, when it came from a turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_input: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Spike,
    Dip,
    LevelShift,
}

/// A flagged span `[start, end)` with its signed robust score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
    pub kind: EventKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: String,
    pub mean: f64,
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
}

/// Reference to a derived series, located inside its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRef {
    pub name: String,
    pub length: usize,
    pub start: usize,
    pub end: usize,
    pub summary: Vec<ChannelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObsValue {
    Series {
        series: Vec<SeriesRef>,
    },
    Real {
        value: f64,
    },
    Stats {
        mean: f64,
        std: f64,
        min: f64,
        max: f64,
        n: usize,
    },
    Category {
        label: String,
    },
    IndexSet {
        indices: Vec<usize>,
        events: Vec<Event>,
        length: usize,
    },
    CrossCorrelation {
        lags: Vec<i64>,
        ccf: Vec<f64>,
        best_lag: i64,
        best_value: f64,
    },
    Granger {
        p_value: f64,
        f_statistic: f64,
        decision: String,
        maxlag: usize,
    },
    Meta {
        meta: SeriesMeta,
    },
    Registered {
        spec: ToolSpec,
        steps: Vec<PipelineStep>,
    },
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        usage: Option<Value>,
    },
}

impl ObsValue {
    pub fn kind(&self) -> OutputKind {
        match self {
            ObsValue::Series { .. } => OutputKind::Series,
            ObsValue::Real { .. } | ObsValue::Stats { .. } => OutputKind::Real,
            ObsValue::Category { .. } => OutputKind::Category,
            ObsValue::IndexSet { .. } => OutputKind::IndexSet,
            ObsValue::CrossCorrelation { .. } | ObsValue::Granger { .. } => OutputKind::Relation,
            ObsValue::Meta { .. } | ObsValue::Registered { .. } => OutputKind::Meta,
            ObsValue::Error { .. } => OutputKind::Error,
        }
    }
}

/// Which stored series an observation speaks about, located in its root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub series: String,
    pub root: String,
    pub window: (usize, usize),
    pub root_length: usize,
}

/// One unit of evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub seq: u64,
    pub kind: OutputKind,
    pub value: ObsValue,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub diagnostics: Map<String, Value>,
    pub source: ToolCall,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subjects: Vec<Subject>,
}

impl Observation {
    pub fn is_error(&self) -> bool {
        self.kind == OutputKind::Error
    }

    pub fn error_message(&self) -> Option<&str> {
        match &self.value {
            ObsValue::Error { message, .. } => Some(message),
            _ => None,
        }
    }
}

/// Failure inside validation or a tool body.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct ToolError {
    pub message: String,
}

impl ToolError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(message)
    }
}

impl From<SeriesError> for ToolError {
    fn from(e: SeriesError) -> Self {
        Self::new(e.to_string())
    }
}

/// What a processing tool asks the dispatcher to store.
pub struct DerivedPiece {
    pub series: TimeSeries,
    /// Window inside the parent this piece covers.
    pub window: (usize, usize),
}

pub enum Produced {
    Value(ObsValue),
    Derived {
        op: &'static str,
        parent: Arc<TimeSeries>,
        pieces: Vec<DerivedPiece>,
    },
}

pub struct ToolOutput {
    pub produced: Produced,
    pub diagnostics: Map<String, Value>,
}

impl ToolOutput {
    pub fn value(value: ObsValue) -> Self {
        Self {
            produced: Produced::Value(value),
            diagnostics: Map::new(),
        }
    }

    pub fn derived(op: &'static str, parent: Arc<TimeSeries>, pieces: Vec<DerivedPiece>) -> Self {
        Self {
            produced: Produced::Derived { op, parent, pieces },
            diagnostics: Map::new(),
        }
    }

    pub fn diag(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.into(), value.into());
        self
    }
}

pub type ToolFn = fn(&Args) -> Result<ToolOutput, ToolError>;

#[derive(Clone)]
enum Implementation {
    Builtin(ToolFn),
    Pipeline(Pipeline),
    Synthesizer,
}

/// Result of one dispatch: the observation answering the call, preceded by
/// the observations of any pipeline steps it ran.
#[derive(Debug, Clone)]
pub struct Dispatch {
    pub steps: Vec<Observation>,
    pub primary: Observation,
}

impl Dispatch {
    /// All observations in log order.
    pub fn into_observations(self) -> Vec<Observation> {
        let mut out = self.steps;
        out.push(self.primary);
        out
    }
}

/// Registry of tools for one agent run, plus its observation counter.
#[derive(Clone)]
pub struct Toolkit {
    entries: Vec<(ToolSpec, Implementation)>,
    next_seq: u64,
}

impl Default for Toolkit {
    fn default() -> Self {
        Self::new()
    }
}

impl Toolkit {
    /// Registry holding the full built-in catalog.
    pub fn new() -> Self {
        let mut entries: Vec<(ToolSpec, Implementation)> = Vec::new();
        for (spec, f) in process::tools()
            .into_iter()
            .chain(detect::tools())
            .chain(numeric::tools())
            .chain(relate::tools())
        {
            entries.push((spec, Implementation::Builtin(f)));
        }
        entries.push((custom::synthesizer_spec(), Implementation::Synthesizer));
        Self { entries, next_seq: 1 }
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.entries.iter().map(|(s, _)| s)
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.specs().find(|s| s.name == name)
    }

    /// Tool names in registry order.
    pub fn names(&self) -> Vec<String> {
        self.specs().map(|s| s.name.clone()).collect()
    }

    /// JSON catalog of every registered tool.
    pub fn catalog(&self) -> Value {
        Value::Array(
            self.specs()
                .map(|s| serde_json::to_value(s).expect("spec serializes"))
                .collect(),
        )
    }

    fn next_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Register a validated pipeline as a new named tool.
    pub fn register_pipeline(&mut self, pipeline: Pipeline) -> Result<ToolSpec, ToolError> {
        let spec = pipeline.validate(self)?;
        self.entries.push((spec.clone(), Implementation::Pipeline(pipeline)));
        Ok(spec)
    }

    /// Validate and execute a call. Never panics: every failure becomes an
    /// error observation carrying the tool's parameter schema.
    pub fn dispatch(
        &mut self,
        tool: &str,
        input: &ArgInput,
        raw_input: Option<&str>,
        store: &mut SeriesStore,
        llm: Option<&mut dyn ChatBackend>,
    ) -> Dispatch {
        let raw_input = raw_input.map(str::to_string);
        let Some((spec, imp)) = self
            .entries
            .iter()
            .find(|(s, _)| s.name == tool)
            .map(|(s, i)| (s.clone(), i.clone()))
        else {
            let source = ToolCall {
                tool: tool.to_string(),
                args: match input {
                    ArgInput::Named(m) => m.clone(),
                    ArgInput::Positional(_) => Map::new(),
                },
                raw_input,
            };
            let message = format!("unknown tool '{tool}'; registered tools: [{}]", self.names().join(", "));
            let primary = self.error_obs(source, message, None);
            return Dispatch {
                steps: Vec::new(),
                primary,
            };
        };
        let bound = match bind(&spec, input, store) {
            Ok(b) => b,
            Err(e) => {
                let source = ToolCall {
                    tool: tool.to_string(),
                    args: match input {
                        ArgInput::Named(m) => m.clone(),
                        ArgInput::Positional(_) => Map::new(),
                    },
                    raw_input,
                };
                let primary = self.error_obs(source, e.message, Some(spec.usage()));
                return Dispatch {
                    steps: Vec::new(),
                    primary,
                };
            }
        };
        let source = ToolCall {
            tool: tool.to_string(),
            args: bound.clone(),
            raw_input,
        };
        match imp {
            Implementation::Builtin(f) => {
                let primary = self.run_builtin(&spec, f, source, store);
                Dispatch {
                    steps: Vec::new(),
                    primary,
                }
            }
            Implementation::Pipeline(p) => self.run_pipeline(&spec, &p, source, store),
            Implementation::Synthesizer => {
                let primary = self.synthesize(&spec, source, llm);
                Dispatch {
                    steps: Vec::new(),
                    primary,
                }
            }
        }
    }

    fn error_obs(&mut self, source: ToolCall, message: String, usage: Option<Value>) -> Observation {
        let subjects = Vec::new();
        Observation {
            seq: self.next_seq(),
            kind: OutputKind::Error,
            value: ObsValue::Error { message, usage },
            diagnostics: Map::new(),
            source,
            subjects,
        }
    }

    fn run_builtin(&mut self, spec: &ToolSpec, f: ToolFn, source: ToolCall, store: &mut SeriesStore) -> Observation {
        let subjects = subjects_of(spec, &source.args, store);
        let result = {
            let args = Args::new(&source.args, store);
            catch_unwind(AssertUnwindSafe(|| f(&args)))
                .unwrap_or_else(|_| Err(ToolError::new("internal error while executing tool")))
        };
        let output = match result {
            Ok(o) => o,
            Err(e) => {
                let mut obs = self.error_obs(source, e.message, Some(spec.usage()));
                obs.subjects = subjects;
                return obs;
            }
        };
        let value = match output.produced {
            Produced::Value(v) => v,
            Produced::Derived { op, parent, pieces } => ObsValue::Series {
                series: pieces
                    .into_iter()
                    .map(|piece| {
                        let summary = summarize(&piece.series);
                        let length = piece.series.len();
                        let name = store.put_derived(&parent, op, piece.series, piece.window);
                        SeriesRef {
                            name,
                            length,
                            start: piece.window.0,
                            end: piece.window.1,
                            summary,
                        }
                    })
                    .collect(),
            },
        };
        Observation {
            seq: self.next_seq(),
            kind: value.kind(),
            value,
            diagnostics: output.diagnostics,
            source,
            subjects,
        }
    }

    fn run_pipeline(
        &mut self,
        spec: &ToolSpec,
        pipeline: &Pipeline,
        source: ToolCall,
        store: &mut SeriesStore,
    ) -> Dispatch {
        let mut steps: Vec<Observation> = Vec::new();
        for step in &pipeline.steps {
            let args = match pipeline.instantiate(step, &source.args, steps.last()) {
                Ok(a) => a,
                Err(e) => {
                    let primary = self.error_obs(source, e.message, Some(spec.usage()));
                    return Dispatch { steps, primary };
                }
            };
            let obs = self
                .dispatch(&step.tool, &ArgInput::Named(args), None, store, None)
                .primary;
            let failed = obs.error_message().map(str::to_string);
            steps.push(obs);
            if let Some(message) = failed {
                let primary = self.error_obs(
                    source,
                    format!("pipeline step '{}' failed: {message}", step.tool),
                    Some(spec.usage()),
                );
                return Dispatch { steps, primary };
            }
        }
        let last = steps.last().expect("pipelines have at least one step");
        let primary = Observation {
            seq: 0,
            kind: last.kind,
            value: last.value.clone(),
            diagnostics: {
                let mut d = last.diagnostics.clone();
                d.insert(
                    "pipeline_steps".into(),
                    Value::from(steps.iter().map(|o| o.seq).collect::<Vec<_>>()),
                );
                d
            },
            subjects: subjects_of(spec, &source.args, store),
            source,
        };
        let primary = Observation {
            seq: self.next_seq(),
            ..primary
        };
        Dispatch { steps, primary }
    }

    fn synthesize(&mut self, spec: &ToolSpec, source: ToolCall, llm: Option<&mut dyn ChatBackend>) -> Observation {
        let Some(llm) = llm else {
            return self.error_obs(
                source,
                "custom_operator needs an LLM backend and none is available".into(),
                Some(spec.usage()),
            );
        };
        let prompt = source
            .args
            .get("prompt")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let outcome = custom::request_pipeline(llm, self, &prompt).and_then(|p| {
            let steps = p.steps.clone();
            self.register_pipeline(p).map(|s| (s, steps))
        });
        match outcome {
            Ok((registered, steps)) => {
                let value = ObsValue::Registered {
                    spec: registered,
                    steps,
                };
                Observation {
                    seq: self.next_seq(),
                    kind: value.kind(),
                    value,
                    diagnostics: Map::new(),
                    source,
                    subjects: Vec::new(),
                }
            }
            Err(e) => self.error_obs(source, e.message, Some(spec.usage())),
        }
    }
}

fn subjects_of(spec: &ToolSpec, args: &Map<String, Value>, store: &SeriesStore) -> Vec<Subject> {
    let mut out = Vec::new();
    for p in spec.parameters.iter().filter(|p| p.ty == ParamType::Series) {
        let names: Vec<&str> = match args.get(&p.name) {
            Some(Value::String(s)) => vec![s.as_str()],
            Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).collect(),
            _ => Vec::new(),
        };
        for name in names {
            if let Some((root, window)) = store.provenance(name) {
                let root_length = store.get(&root).map(|s| s.len()).unwrap_or(window.1);
                out.push(Subject {
                    series: name.to_string(),
                    root,
                    window,
                    root_length,
                });
            }
        }
    }
    out
}

/// Per-channel summary used when a series is rendered into a prompt.
pub fn summarize(series: &TimeSeries) -> Vec<ChannelSummary> {
    series
        .channels()
        .iter()
        .enumerate()
        .filter_map(|(c, name)| {
            let finite: Vec<f64> = series.channel(c).iter().copied().filter(|v| v.is_finite()).collect();
            if finite.is_empty() {
                return None;
            }
            let k = finite.len().min(5);
            Some(ChannelSummary {
                channel: name.clone(),
                mean: stats::mean(&finite),
                std: (finite.len() > 1).then(|| stats::std_dev(&finite)),
                min: stats::min(&finite),
                max: stats::max(&finite),
                head: finite[..k].to_vec(),
                tail: finite[finite.len() - k..].to_vec(),
            })
        })
        .collect()
}

pub(crate) fn series_param(name: &str) -> ParamSpec {
    ParamSpec::required(name, ParamType::Series, "series name")
}

pub(crate) fn choice(options: &[&str]) -> ParamType {
    ParamType::Choice(options.iter().map(|s| s.to_string()).collect())
}

pub(crate) fn spec(
    name: &str,
    family: Family,
    output: OutputKind,
    description: &str,
    parameters: Vec<ParamSpec>,
) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        family,
        description: description.into(),
        parameters,
        output,
    }
}
