//! Scripted reasoner fixtures built from a question's ground truth.

use serde_json::json;

use super::{BenchQuestion, Category};
use crate::llm::{ScriptEntry, REASONER_MARKER};

fn step(thought: &str, tool: &str, input: serde_json::Value) -> String {
    format!("Thought: {thought}\nAction: {tool}\nAction Input: {input}")
}

fn answer(text: &str) -> String {
    format!("Thought: I now know the final answer.\nFinal Answer: {text}")
}

fn series_names(q: &BenchQuestion) -> Vec<&str> {
    q.series.iter().map(|s| s.name()).collect()
}

/// Tool calls an ideal agent makes for `q`, followed by the true answer.
pub fn ideal_turns(q: &BenchQuestion) -> Vec<String> {
    let names = series_names(q);
    let single = |thought: &str, tool: &str| vec![step(thought, tool, json!({"name": names[0]}))];
    let mut turns = match q.category {
        Category::Trend => single("Classify the trend of the series.", "trend_classifier"),
        Category::Seasonality => single("Estimate the seasonal period.", "seasonality_detector"),
        Category::AnomalyLocation => single("Locate the anomaly.", "anomaly_classifier"),
        Category::Stationarity => single("Run a unit-root test.", "stationarity_test"),
        Category::Noise => single("Profile the residual noise.", "noise_profile"),
        Category::SimilarityChoice => names[1..]
            .iter()
            .map(|c| {
                step(
                    &format!("Compare the reference with {c}."),
                    "shape_similarity",
                    json!({"name1": names[0], "name2": c}),
                )
            })
            .collect(),
        Category::LaggedCorrelation => vec![step(
            "Find the lag of strongest cross-correlation.",
            "cross_correlation",
            json!({"name1": names[0], "name2": names[1], "max_lag": 10}),
        )],
        Category::GrangerDirection => vec![step(
            "Test for Granger causality.",
            "granger_causality",
            json!({"name1": names[0], "name2": names[1], "maxlag": 2}),
        )],
        Category::TwoSeriesCloudyWeek => names
            .iter()
            .map(|n| {
                step(
                    &format!("Segment {n} into four weeks and compare the weekly means."),
                    "segment_series",
                    json!({"name": n, "k": 4}),
                )
            })
            .collect(),
    };
    turns.push(answer(&q.answer));
    turns
}

/// Reasoner-only entries; critic calls find no match and fall back to the
/// deterministic critic.
pub fn reasoner_entries(turns: Vec<String>) -> Vec<ScriptEntry> {
    turns
        .into_iter()
        .map(|t| ScriptEntry::contains(REASONER_MARKER, t))
        .collect()
}

pub fn ideal_policy(q: &BenchQuestion) -> Vec<ScriptEntry> {
    reasoner_entries(ideal_turns(q))
}

/// A model that states the true answer without consulting any tool, once
/// per reasoner turn of the budget.
pub fn evidence_free(q: &BenchQuestion, budget: usize) -> Vec<ScriptEntry> {
    reasoner_entries(vec![answer(&q.answer); budget])
}
