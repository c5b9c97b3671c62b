//! Predicate coverage: binding observations to required predicates, and
//! contradiction bookkeeping over the evidence log.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::intent::{Extractor, Predicate, QuestionIntent, ScopeRule};
use crate::evidence::{Binding, EvidenceLog, Scope};
use crate::toolkit::{ObsValue, Observation};

/// Covered predicates with their bound values, and the outstanding gaps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageState {
    pub covered: IndexMap<String, Value>,
    pub gaps: Vec<String>,
}

impl CoverageState {
    /// Nothing covered: the gap set is all of `R`.
    pub fn new(intent: &QuestionIntent) -> Self {
        Self {
            covered: IndexMap::new(),
            gaps: intent.names(),
        }
    }

    /// Replay every binding already in the log.
    pub fn from_log(log: &EvidenceLog, intent: &QuestionIntent) -> Self {
        let mut state = Self::new(intent);
        for entry in log.entries() {
            for b in &entry.bindings {
                state.record(b);
            }
        }
        state
    }

    pub fn is_complete(&self) -> bool {
        self.gaps.is_empty()
    }

    fn record(&mut self, b: &Binding) {
        if let Some(i) = self.gaps.iter().position(|g| *g == b.predicate) {
            self.gaps.remove(i);
        }
        self.covered.insert(b.predicate.clone(), b.value.clone());
    }
}

/// Root-coordinate scope of an observation: each subject's window,
/// narrowed by a `window` diagnostic when the tool analyzed a sub-range.
pub fn observation_scope(obs: &Observation) -> Vec<Scope> {
    let narrowed = obs
        .diagnostics
        .get("window")
        .and_then(Value::as_array)
        .and_then(|w| Some((w.first()?.as_u64()? as usize, w.get(1)?.as_u64()? as usize)));
    obs.subjects
        .iter()
        .map(|s| {
            let (start, end) = match narrowed {
                Some((a, b)) => (s.window.0 + a, (s.window.0 + b).min(s.window.1)),
                None => s.window,
            };
            Scope {
                root: s.root.clone(),
                start,
                end,
            }
        })
        .collect()
}

fn whole(obs: &Observation, scope: &[Scope]) -> bool {
    !scope.is_empty()
        && obs
            .subjects
            .iter()
            .zip(scope)
            .all(|(s, sc)| sc.start == 0 && sc.end == s.root_length)
}

const THIRDS: [&str; 3] = ["beginning", "middle", "end"];

fn extract(extractor: &Extractor, obs: &Observation) -> Option<Value> {
    match (extractor, &obs.value) {
        (Extractor::Any, _) => Some(json!(true)),
        (Extractor::HasEvents, ObsValue::IndexSet { indices, .. }) => Some(json!(!indices.is_empty())),
        (Extractor::EventThird, ObsValue::IndexSet { indices, events, .. }) => {
            let subject = obs.subjects.first()?;
            let local = events
                .iter()
                .fold(None::<&crate::toolkit::Event>, |best, e| match best {
                    Some(b) if b.score.abs() >= e.score.abs() => Some(b),
                    _ => Some(e),
                })
                .map(|e| e.start)
                .or_else(|| indices.first().copied())?;
            let pos = subject.window.0 + local;
            let third = (3 * pos / subject.root_length.max(1)).min(2);
            Some(json!(THIRDS[third]))
        }
        (Extractor::Category, ObsValue::Category { label }) => Some(json!(label)),
        (Extractor::GrangerPValue, ObsValue::Granger { p_value, .. }) => Some(json!(p_value)),
        (Extractor::GrangerDecision, ObsValue::Granger { decision, .. }) => Some(json!(decision)),
        (Extractor::BestLag, ObsValue::CrossCorrelation { best_lag, .. }) => Some(json!(best_lag)),
        (Extractor::SegmentMeans, ObsValue::Series { series }) if obs.source.tool == "segment_series" => {
            let means: Vec<f64> = series
                .iter()
                .map(|r| r.summary.first().map_or(f64::NAN, |c| c.mean))
                .collect();
            Some(json!(means))
        }
        (Extractor::RealValue, ObsValue::Real { value }) => Some(json!(value)),
        (Extractor::RealValue, v @ ObsValue::Stats { .. }) => serde_json::to_value(v).ok(),
        (Extractor::Diagnostic(key), _) => obs.diagnostics.get(key).filter(|v| !v.is_null()).cloned(),
        _ => None,
    }
}

fn binding_for(p: &Predicate, obs: &Observation, scope: &[Scope]) -> Option<Binding> {
    if obs.is_error() || !p.binding.accepts_tool(&obs.source.tool) {
        return None;
    }
    if let Some(root) = &p.root {
        if !obs.subjects.iter().any(|s| &s.root == root) {
            return None;
        }
    }
    if p.binding.scope == ScopeRule::Whole && !whole(obs, scope) {
        return None;
    }
    let value = extract(&p.binding.extract, obs)?;
    Some(Binding {
        predicate: p.name.clone(),
        value,
        scope: scope.to_vec(),
    })
}

/// Bindings an observation contributes to the question's predicates.
pub fn extract_bindings(obs: &Observation, intent: &QuestionIntent) -> Vec<Binding> {
    let scope = observation_scope(obs);
    intent
        .required
        .iter()
        .filter_map(|p| binding_for(p, obs, &scope))
        .collect()
}

/// Bind an observation: gap predicates it verifies move to covered, and
/// covered ones take the newer value. Returns the bindings to log with it.
pub fn bind_predicates(obs: &Observation, intent: &QuestionIntent, state: &mut CoverageState) -> Vec<Binding> {
    let bindings = extract_bindings(obs, intent);
    for b in &bindings {
        state.record(b);
    }
    bindings
}

/// Two log entries binding the same discrete predicate on the same scope
/// to different values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contradiction {
    pub predicate: String,
    pub first: usize,
    pub second: usize,
    pub values: (Value, Value),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_by: Option<usize>,
    /// Later bindings of the predicate that failed to settle it.
    pub failed_attempts: usize,
}

impl Contradiction {
    pub fn is_resolved(&self) -> bool {
        self.resolved_by.is_some()
    }

    /// Reruns were tried after the conflict and none settled it.
    pub fn is_unresolvable(&self) -> bool {
        self.resolved_by.is_none() && self.failed_attempts > 0
    }
}

fn strictly_contains(outer: &[Scope], inner: &[Scope]) -> bool {
    outer.len() == inner.len() && outer.iter().zip(inner).all(|(o, i)| o.contains(i)) && outer != inner
}

/// Every contradiction in the log and whether a later entry resolved it.
/// Resolution needs a later binding that agrees with one side and either
/// covers a strict superset window or ran with different arguments.
pub fn contradictions(log: &EvidenceLog, intent: &QuestionIntent) -> Vec<Contradiction> {
    let mut out = Vec::new();
    for p in intent.required.iter().filter(|p| p.domain.is_discrete()) {
        let bound: Vec<(usize, &Binding)> = log.bindings_of(&p.name).collect();
        for (a, &(i, bi)) in bound.iter().enumerate() {
            for &(j, bj) in &bound[a + 1..] {
                if bi.scope != bj.scope || bi.value == bj.value {
                    continue;
                }
                let args = |e: usize| log.get(e).map(|x| &x.observation.source.args);
                let mut resolved_by = None;
                let mut failed_attempts = 0;
                for &(k, bk) in bound.iter().filter(|(k, _)| *k > j) {
                    let settles = (bk.value == bi.value || bk.value == bj.value)
                        && bk.scope.len() == bi.scope.len()
                        && (strictly_contains(&bk.scope, &bi.scope)
                            || (bk.scope == bi.scope && args(k) != args(i) && args(k) != args(j)));
                    if settles {
                        resolved_by = Some(k);
                        break;
                    }
                    if bk.scope == bi.scope || strictly_contains(&bk.scope, &bi.scope) {
                        failed_attempts += 1;
                    }
                }
                out.push(Contradiction {
                    predicate: p.name.clone(),
                    first: i,
                    second: j,
                    values: (bi.value.clone(), bj.value.clone()),
                    resolved_by,
                    failed_attempts,
                });
            }
        }
    }
    out
}
