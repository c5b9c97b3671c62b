//! Custom operators: declarative pipelines over existing tools, synthesized
//! by the LLM from a natural-language request. No generated code runs; a
//! pipeline is an ordered list of tool calls with argument bindings.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    args::coerce_value, spec, Family, ObsValue, Observation, OutputKind, ParamSpec, ParamType, ToolError, ToolSpec,
    Toolkit,
};
use crate::llm::{ChatBackend, ChatMessage};

/// One call inside a pipeline. String argument values beginning with `$`
/// are references: `$input` (the pipeline's series argument), `$prev` (the
/// series produced by the previous step) or `$<param>` (a declared
/// pipeline parameter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStep {
    pub tool: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParamSpec>,
    pub steps: Vec<PipelineStep>,
}

enum Ref<'a> {
    Input,
    Prev,
    Param(&'a str),
}

fn reference(v: &Value) -> Option<Ref<'_>> {
    let s = v.as_str()?.strip_prefix('$')?;
    Some(match s {
        "input" | "name" => Ref::Input,
        "prev" => Ref::Prev,
        other => Ref::Param(other),
    })
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Pipeline {
    fn invalid(&self, msg: impl std::fmt::Display) -> ToolError {
        ToolError::new(format!("invalid pipeline '{}': {msg}", self.name))
    }

    /// Check the pipeline against the registry and return the tool signature it would
    /// be registered under.
    pub fn validate(&self, kit: &Toolkit) -> Result<ToolSpec, ToolError> {
        if !valid_identifier(&self.name) {
            return Err(self.invalid("name must be a lowercase identifier"));
        }
        if kit.spec(&self.name).is_some() {
            return Err(self.invalid("a tool with this name is already registered"));
        }
        if self.steps.is_empty() {
            return Err(self.invalid("no steps"));
        }
        for p in &self.parameters {
            if p.name == "name" {
                return Err(self.invalid("parameter 'name' is reserved for the input series"));
            }
        }
        let mut previous: Option<OutputKind> = None;
        for (k, step) in self.steps.iter().enumerate() {
            let target = kit
                .spec(&step.tool)
                .filter(|s| s.family != Family::Custom)
                .ok_or_else(|| self.invalid(format!("step {} references unknown tool '{}'", k + 1, step.tool)))?;
            for (key, value) in &step.args {
                let param = target.param(key).ok_or_else(|| {
                    self.invalid(format!(
                        "step {} passes unknown parameter '{key}' to {}",
                        k + 1,
                        step.tool
                    ))
                })?;
                match reference(value) {
                    Some(Ref::Input) | Some(Ref::Prev) if param.ty != ParamType::Series => {
                        return Err(self.invalid(format!("step {}: '{key}' is not a series parameter", k + 1)));
                    }
                    Some(Ref::Prev) if previous != Some(OutputKind::Series) => {
                        return Err(self.invalid(format!(
                            "step {}: $prev needs a previous step that returns a series",
                            k + 1
                        )));
                    }
                    Some(Ref::Param(p)) => {
                        if !self.parameters.iter().any(|d| d.name == p) {
                            return Err(self.invalid(format!("step {} references undeclared parameter ${p}", k + 1)));
                        }
                    }
                    Some(_) => {}
                    None => {
                        coerce_value(param, value)
                            .map_err(|e| self.invalid(format!("step {}: {}", k + 1, e.message)))?;
                    }
                }
            }
            for p in target.parameters.iter().filter(|p| p.required) {
                if !step.args.contains_key(&p.name) {
                    return Err(self.invalid(format!(
                        "step {} omits required parameter '{}' of {}",
                        k + 1,
                        p.name,
                        step.tool
                    )));
                }
            }
            previous = Some(target.output);
        }
        let mut parameters = vec![ParamSpec::required("name", ParamType::Series, "input series")];
        parameters.extend(self.parameters.iter().cloned());
        let out = spec(
            &self.name,
            Family::Custom,
            previous.expect("non-empty steps"),
            if self.description.trim().is_empty() {
                "custom pipeline"
            } else {
                &self.description
            },
            parameters,
        );
        out.validate().map_err(|e| self.invalid(e))?;
        Ok(out)
    }

    /// Concrete arguments for `step` given the pipeline call and the
    /// observation of the previous step.
    pub fn instantiate(
        &self,
        step: &PipelineStep,
        call: &Map<String, Value>,
        prev: Option<&Observation>,
    ) -> Result<Map<String, Value>, ToolError> {
        let mut out = Map::new();
        for (key, value) in &step.args {
            let resolved = match reference(value) {
                Some(Ref::Input) => call.get("name").cloned(),
                Some(Ref::Prev) => match prev.map(|o| &o.value) {
                    Some(ObsValue::Series { series }) if !series.is_empty() => {
                        Some(Value::String(series[0].name.clone()))
                    }
                    _ => return Err(ToolError::new("previous step produced no series")),
                },
                Some(Ref::Param(p)) => call.get(p).cloned(),
                None => Some(value.clone()),
            };
            if let Some(v) = resolved {
                out.insert(key.clone(), v);
            }
        }
        Ok(out)
    }
}

pub(super) fn synthesizer_spec() -> ToolSpec {
    spec(
        "custom_operator",
        Family::Custom,
        OutputKind::Meta,
        "Register a new tool from a description; it becomes a pipeline of existing tool calls",
        vec![ParamSpec::required(
            "prompt",
            ParamType::Text,
            "what the new operator should compute",
        )],
    )
}

const SYNTHESIS_INSTRUCTIONS: &str = "You design custom time series operators as pipelines of existing tools. \
Reply with one JSON object and nothing else, using this schema:
{\"name\": \"lowercase_identifier\", \"description\": \"one line\", \
\"parameters\": [{\"name\": \"...\", \"type\": \"count|int|real|text\", \"required\": true}], \
\"steps\": [{\"tool\": \"existing tool name\", \"args\": {\"param\": value}}]}
Argument values may reference $input (the series passed to the new tool), $prev (the series returned by the previous step) or $<parameter> (a declared parameter).
Available tools:";

/// Build the synthesis request for `prompt`.
pub fn synthesis_messages(kit: &Toolkit, prompt: &str) -> Vec<ChatMessage> {
    let mut text = String::from(SYNTHESIS_INSTRUCTIONS);
    for s in kit.specs().filter(|s| s.family != Family::Custom) {
        text.push('\n');
        text.push_str(&serde_json::to_string(s).expect("spec serializes"));
    }
    text.push_str("\n\nRequest: ");
    text.push_str(prompt);
    vec![ChatMessage::user(text)]
}

/// Extract the outermost JSON object from model text (code fences allowed).
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

pub fn parse_pipeline(text: &str) -> Result<Pipeline, ToolError> {
    let body =
        extract_json_object(text).ok_or_else(|| ToolError::new("custom operator response contains no JSON object"))?;
    serde_json::from_str(body)
        .map_err(|e| ToolError::new(format!("custom operator response is not a valid pipeline: {e}")))
}

pub(super) fn request_pipeline(llm: &mut dyn ChatBackend, kit: &Toolkit, prompt: &str) -> Result<Pipeline, ToolError> {
    let reply = llm
        .complete(&synthesis_messages(kit, prompt))
        .map_err(|e| ToolError::new(format!("custom operator synthesis failed: {e}")))?;
    parse_pipeline(&reply)
}

/// Pipeline for a rolling mean of volatility, the canonical example operator.
pub fn volatility_adjusted_ma(window: usize) -> Value {
    json!({
        "name": "vol_adjusted_ma",
        "description": "rolling mean of windowed volatility",
        "parameters": [],
        "steps": [
            {"tool": "volatility", "args": {"name": "$input", "window": window}},
            {"tool": "rolling_stat", "args": {"name": "$prev", "stat": "mean", "window": window}}
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{SeriesStore, TimeSeries};
    use crate::toolkit::ArgInput;

    fn store() -> SeriesStore {
        let mut st = SeriesStore::new();
        let x: Vec<f64> = (0..60).map(|i| ((i * 7) % 11) as f64 + 0.1 * i as f64).collect();
        st.insert(TimeSeries::from_values("a", x).unwrap()).unwrap();
        st
    }

    #[test]
    fn pipeline_matches_manual_composition() {
        let mut kit = Toolkit::new();
        let pipeline: Pipeline = serde_json::from_value(volatility_adjusted_ma(10)).unwrap();
        let spec = kit.register_pipeline(pipeline).unwrap();
        assert_eq!(spec.output, OutputKind::Series);

        let mut st = store();
        let named = |v: Value| ArgInput::Named(v.as_object().unwrap().clone());
        let d = kit.dispatch("vol_adjusted_ma", &named(json!({"name": "a"})), None, &mut st, None);
        assert_eq!(d.steps.len(), 2);
        let via_pipeline = match &d.primary.value {
            ObsValue::Series { series } => st.get(&series[0].name).unwrap().channel(0).to_vec(),
            other => panic!("unexpected {other:?}"),
        };

        let mut manual_kit = Toolkit::new();
        let mut st2 = store();
        let v = manual_kit.dispatch(
            "volatility",
            &named(json!({"name": "a", "window": 10})),
            None,
            &mut st2,
            None,
        );
        let vname = match v.primary.value {
            ObsValue::Series { series } => series[0].name.clone(),
            other => panic!("unexpected {other:?}"),
        };
        let r = manual_kit.dispatch(
            "rolling_stat",
            &named(json!({"name": vname, "stat": "mean", "window": 10})),
            None,
            &mut st2,
            None,
        );
        let manual = match r.primary.value {
            ObsValue::Series { series } => st2.get(&series[0].name).unwrap().channel(0).to_vec(),
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(via_pipeline, manual);

        let again = kit.dispatch("vol_adjusted_ma", &named(json!({"name": "a"})), None, &mut st, None);
        let second = match &again.primary.value {
            ObsValue::Series { series } => st.get(&series[0].name).unwrap().channel(0).to_vec(),
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(second, via_pipeline);
    }

    #[test]
    fn unknown_tool_fails_validation() {
        let kit = Toolkit::new();
        let p: Pipeline = serde_json::from_value(json!({
            "name": "magic", "description": "x",
            "steps": [{"tool": "fft_magic", "args": {"name": "$input"}}]
        }))
        .unwrap();
        let err = p.validate(&kit).unwrap_err();
        assert!(err.message.contains("unknown tool 'fft_magic'"), "{}", err.message);
    }

    #[test]
    fn prev_without_series_fails() {
        let kit = Toolkit::new();
        let p: Pipeline = serde_json::from_value(json!({
            "name": "bad", "description": "x",
            "steps": [
                {"tool": "trend_classifier", "args": {"name": "$input"}},
                {"tool": "autocorr", "args": {"name": "$prev", "lag": 1}}
            ]
        }))
        .unwrap();
        assert!(p.validate(&kit).is_err());
    }

    #[test]
    fn declared_parameters_bind() {
        let mut kit = Toolkit::new();
        let p: Pipeline = serde_json::from_value(json!({
            "name": "smooth", "description": "rolling mean",
            "parameters": [{"name": "w", "type": "count", "required": true}],
            "steps": [{"tool": "rolling_stat", "args": {"name": "$input", "stat": "mean", "window": "$w"}}]
        }))
        .unwrap();
        kit.register_pipeline(p).unwrap();
        let mut st = store();
        let d = kit.dispatch(
            "smooth",
            &ArgInput::Positional(vec!["a".into(), "5".into()]),
            None,
            &mut st,
            None,
        );
        match &d.primary.value {
            ObsValue::Series { series } => assert_eq!(series[0].length, 56),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_extraction_tolerates_fences() {
        let text = "```json\n{\"a\": 1}\n```";
        assert_eq!(extract_json_object(text), Some("{\"a\": 1}"));
        assert!(parse_pipeline("no json here").is_err());
    }
}
