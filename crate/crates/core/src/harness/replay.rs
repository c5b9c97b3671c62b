//! Replay of the solar cloudy-week trajectory: a multi-series anomaly call
//! fails, the critic relays the usage schema, per-series detection finds
//! almost nothing, weekly segmentation finds the depressed weeks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::generate::{cloudy_answer, solar_series, CLOUDY_QUESTION, SOLAR_NAMES};
use crate::agent::{run_with_backend, AgentConfig, AgentError, AgentResult, Step};
use crate::llm::{ScriptEntry, ScriptedBackend};
use crate::series::{SeriesStore, TimeSeries};
use crate::toolkit::ObsValue;

pub const FIXTURE: &str = include_str!("../../fixtures/solar_case_study.json");
pub const REPLAY_SEED: u64 = 2024;
/// Depressed weeks of each panel, zero-based.
pub const CLOUDY_WEEKS: [&[usize]; 2] = [&[1], &[1, 3]];
/// Night-time spike carried by the second panel.
pub const SPIKE_AT: usize = 388;
/// Largest flagged share of points that still counts as sparse.
pub const SPARSE_SHARE: f64 = 0.02;

/// The two month-long hourly panels of the case study.
pub fn case_study_store() -> SeriesStore {
    let mut rng = ChaCha8Rng::seed_from_u64(REPLAY_SEED);
    let mut store = SeriesStore::new();
    for (i, name) in SOLAR_NAMES.iter().enumerate() {
        let mut values = solar_series(&mut rng, CLOUDY_WEEKS[i], 0.4);
        if i == 1 {
            values[SPIKE_AT] += 3.0;
        }
        store
            .insert(TimeSeries::from_values(*name, values).expect("finite values"))
            .expect("distinct names");
    }
    store
}

pub fn case_study_truth() -> String {
    cloudy_answer(&[CLOUDY_WEEKS[0].to_vec(), CLOUDY_WEEKS[1].to_vec()])
}

pub fn bundled_fixture() -> Vec<ScriptEntry> {
    serde_json::from_str(FIXTURE).expect("bundled fixture parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub stages: Vec<StageResult>,
    pub result: AgentResult,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.passed)
    }

    pub fn first_failure(&self) -> Option<&StageResult> {
        self.stages.iter().find(|s| !s.passed)
    }
}

fn tool_steps<'a>(result: &'a AgentResult, tool: &'a str) -> impl Iterator<Item = &'a Step> + 'a {
    result
        .trace
        .steps
        .iter()
        .filter(move |s| s.action.as_ref().is_some_and(|a| a.tool == tool))
}

fn subject_is(step: &Step, name: &str) -> bool {
    step.observation
        .as_ref()
        .is_some_and(|o| o.subjects.len() == 1 && o.subjects[0].series == name)
}

fn stage(stage: usize, name: &str, check: Result<String, String>) -> StageResult {
    let (passed, detail) = match check {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    StageResult {
        stage,
        name: name.into(),
        passed,
        detail,
    }
}

fn stage1(r: &AgentResult) -> Result<String, String> {
    let s = r.trace.steps.first().ok_or("empty trace")?;
    let a = s.action.as_ref().ok_or("step 1 has no action")?;
    let raw = a.raw_input.as_deref().unwrap_or("");
    if a.tool != "anomaly_classifier" || !SOLAR_NAMES.iter().all(|n| raw.contains(n)) {
        return Err(format!("step 1 called {} with {raw}", a.tool));
    }
    match s.observation.as_ref().map(|o| &o.value) {
        Some(ObsValue::Error { message, .. }) if message == "x must be 1-D" => Ok(format!("error: {message}")),
        other => Err(format!("step 1 observation: {other:?}")),
    }
}

fn stage2(r: &AgentResult) -> Result<String, String> {
    let f = r.trace.steps[0].feedback.as_deref().unwrap_or("");
    let usage = json!({"parameters": [{"name": "name", "required": true}, {"name": "threshold", "required": false}, {"name": "window", "required": false}]});
    let needed = ["x must be 1-D".to_string(), format!("The correct usage is {usage}")];
    match needed.iter().find(|n| !f.contains(n.as_str())) {
        None => Ok(f.to_string()),
        Some(n) => Err(format!("step 1 feedback lacks {n:?}: {f}")),
    }
}

fn stage3(r: &AgentResult) -> Result<String, String> {
    let mut details = Vec::new();
    for name in SOLAR_NAMES {
        let step = tool_steps(r, "anomaly_classifier")
            .find(|s| subject_is(s, name))
            .ok_or(format!("no single-series anomaly call on {name}"))?;
        let Some(ObsValue::IndexSet { indices, length, .. }) = step.observation.as_ref().map(|o| &o.value) else {
            return Err(format!("anomaly call on {name} returned no index set"));
        };
        if indices.len() as f64 > SPARSE_SHARE * *length as f64 {
            return Err(format!("{name}: {} of {length} points flagged", indices.len()));
        }
        if name == SOLAR_NAMES[1] && !indices.contains(&SPIKE_AT) {
            return Err(format!("{name}: spike at {SPIKE_AT} missed, got {indices:?}"));
        }
        details.push(format!("{name}: {indices:?}"));
    }
    Ok(details.join("; "))
}

fn stage4(r: &AgentResult) -> Result<String, String> {
    let last_anomaly = tool_steps(r, "anomaly_classifier").map(|s| s.k).max().unwrap_or(0);
    let mut details = Vec::new();
    for name in SOLAR_NAMES {
        let Some(step) = tool_steps(r, "segment_series").find(|s| s.k > last_anomaly && subject_is(s, name)) else {
            continue;
        };
        let pred = format!("segment_means@{name}");
        let means = step
            .entries
            .iter()
            .filter_map(|&e| r.log.get(e))
            .flat_map(|e| &e.bindings)
            .find(|b| b.predicate == pred)
            .and_then(|b| b.value.as_array().cloned())
            .ok_or(format!("{pred} not bound"))?;
        if means.len() != 4 {
            return Err(format!("{name}: {} segments", means.len()));
        }
        details.push(format!("{name}: {}", serde_json::Value::Array(means)));
    }
    if details.is_empty() {
        return Err("no weekly segmentation after the anomaly calls".into());
    }
    Ok(details.join("; "))
}

fn stage5(r: &AgentResult) -> Result<String, String> {
    let answer = r.answer().ok_or("no accepted answer")?;
    let last = r.trace.steps.last().ok_or("empty trace")?;
    if !last.gate.as_ref().is_some_and(|g| g.accepted()) {
        return Err(format!("gate did not accept: {:?}", last.gate));
    }
    r.check_grounding()?;
    if !r.intent.schema.equivalent(answer, &case_study_truth()) {
        return Err(format!("answer {answer:?} does not name the injected weeks"));
    }
    Ok(answer.to_string())
}

/// Replay `fixture` on the case-study series and check all five stages.
pub fn replay_with(fixture: Vec<ScriptEntry>, config: AgentConfig) -> Result<ReplayReport, AgentError> {
    let mut backend = ScriptedBackend::new(fixture);
    let result = run_with_backend(CLOUDY_QUESTION, case_study_store(), &mut backend, config)?;
    let stages = vec![
        stage(1, "multi-series anomaly call fails", stage1(&result)),
        stage(2, "feedback carries the usage schema", stage2(&result)),
        stage(3, "per-series anomaly calls are sparse", stage3(&result)),
        stage(4, "weekly segmentation with means", stage4(&result)),
        stage(5, "final answer in the mandated format", stage5(&result)),
    ];
    Ok(ReplayReport { stages, result })
}

pub fn replay_case_study() -> Result<ReplayReport, AgentError> {
    replay_with(bundled_fixture(), AgentConfig::default())
}
