//! Benchmark questions, synthetic generators, scripted fixtures, scoring,
//! reports and the solar case-study replay.

pub mod fixtures;
pub mod generate;
pub mod replay;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use generate::{generate_synthetic, regenerate};
pub use replay::{replay_case_study, ReplayReport};

use crate::agent::{run_with_backend, trace_to_string, AgentConfig, AgentResult, Outcome};
use crate::llm::{BackendConfig, ChatBackend, LlmError, ScriptedBackend};
use crate::oversight::{detect_question_intents, Reason};
use crate::series::{SeriesError, SeriesFormat, SeriesStore, TimeSeries};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown category '{0}'; known: {known}", known = Category::ALL.map(|c| c.name()).join(", "))]
    UnknownCategory(String),
    #[error("{0}")]
    Io(String),
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Task categories of the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Trend,
    Seasonality,
    AnomalyLocation,
    Stationarity,
    Noise,
    SimilarityChoice,
    LaggedCorrelation,
    GrangerDirection,
    TwoSeriesCloudyWeek,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Trend,
        Category::Seasonality,
        Category::AnomalyLocation,
        Category::Stationarity,
        Category::Noise,
        Category::SimilarityChoice,
        Category::LaggedCorrelation,
        Category::GrangerDirection,
        Category::TwoSeriesCloudyWeek,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Trend => "trend",
            Category::Seasonality => "seasonality",
            Category::AnomalyLocation => "anomaly_location",
            Category::Stationarity => "stationarity",
            Category::Noise => "noise",
            Category::SimilarityChoice => "similarity_choice",
            Category::LaggedCorrelation => "lagged_correlation",
            Category::GrangerDirection => "granger_direction",
            Category::TwoSeriesCloudyWeek => "two_series_cloudy_week",
        }
    }

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).expect("listed")
    }
}

impl FromStr for Category {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| HarnessError::UnknownCategory(s.to_string()))
    }
}

/// Where a question's series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesSource {
    Inline { name: String, values: Vec<f64> },
    File { name: String, path: PathBuf },
}

impl SeriesSource {
    pub fn name(&self) -> &str {
        match self {
            SeriesSource::Inline { name, .. } | SeriesSource::File { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64, params: Value },
    External { file: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchQuestion {
    pub id: String,
    pub category: Category,
    pub question: String,
    pub series: Vec<SeriesSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub answer: String,
    pub provenance: Provenance,
}

impl BenchQuestion {
    /// A fresh store holding this question's series. With `withhold`, every
    /// series keeps its name and length but its values are zeroed.
    pub fn store(&self, withhold: bool) -> Result<SeriesStore, HarnessError> {
        let mut store = SeriesStore::new();
        for s in &self.series {
            match s {
                SeriesSource::Inline { name, values } => {
                    let values = if withhold {
                        vec![0.0; values.len()]
                    } else {
                        values.clone()
                    };
                    store.insert(TimeSeries::from_values(name.clone(), values)?)?;
                }
                SeriesSource::File { name, path } => {
                    let format = SeriesFormat::from_path(path).unwrap_or(SeriesFormat::Csv);
                    if withhold {
                        let len = SeriesStore::new().load(path, format, name)?.len();
                        store.insert(TimeSeries::from_values(name.clone(), vec![0.0; len])?)?;
                    } else {
                        store.load(path, format, name)?;
                    }
                }
            }
        }
        Ok(store)
    }
}

/// Read a JSONL dataset, one question per line. Relative file paths are
/// resolved against the dataset's directory.
pub fn load_dataset(path: &Path) -> Result<Vec<BenchQuestion>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut q: BenchQuestion = serde_json::from_str(line).map_err(|e| HarnessError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        for s in &mut q.series {
            if let SeriesSource::File { path, .. } = s {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        if let Some(opts) = &q.options {
            if !opts.contains(&q.answer) {
                return Err(HarnessError::Parse {
                    line: i + 1,
                    message: format!("answer '{}' is not among the options", q.answer),
                });
            }
        }
        out.push(q);
    }
    Ok(out)
}

pub fn dataset_to_jsonl(questions: &[BenchQuestion]) -> String {
    questions
        .iter()
        .map(|q| serde_json::to_string(q).expect("question serializes") + "\n")
        .collect()
}

/// Built-in scripted policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Calls the binding tools, then states the true answer.
    Ideal,
    /// States the true answer without any tool call.
    EvidenceFree,
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Policy::Ideal),
            "evidence_free" | "evidence-free" => Ok(Policy::EvidenceFree),
            _ => Err(format!("unknown policy '{s}' (ideal, evidence_free)")),
        }
    }
}

/// Backend used for every question of a run; each question gets a fresh one.
#[derive(Debug, Clone)]
pub enum BenchBackend {
    Policy(Policy),
    /// Directory of `<question id>.json` fixtures.
    FixtureDir(PathBuf),
    Config(BackendConfig),
}

impl BenchBackend {
    fn open(&self, q: &BenchQuestion, budget: usize) -> Result<Box<dyn ChatBackend + Send>, LlmError> {
        match self {
            BenchBackend::Policy(Policy::Ideal) => Ok(Box::new(ScriptedBackend::new(fixtures::ideal_policy(q)))),
            BenchBackend::Policy(Policy::EvidenceFree) => {
                Ok(Box::new(ScriptedBackend::new(fixtures::evidence_free(q, budget))))
            }
            BenchBackend::FixtureDir(dir) => Ok(Box::new(ScriptedBackend::from_file(
                &dir.join(format!("{}.json", q.id)),
            )?)),
            BenchBackend::Config(c) => c.connect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub budget: usize,
    /// Worker threads; 1 runs sequentially, 0 uses the global pool.
    pub parallelism: usize,
    /// Directory receiving one trace file per question.
    pub trace_dir: Option<PathBuf>,
    pub withhold_series: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            budget: crate::agent::DEFAULT_BUDGET,
            parallelism: 1,
            trace_dir: None,
            withhold_series: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Answer,
    Failure,
    /// Transport or setup error; reported apart from incorrect answers.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub category: Category,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub expected: String,
    pub correct: bool,
    pub gate_rounds: usize,
    pub steps: usize,
    pub llm_calls: usize,
    /// Whether the first proposed answer was rejected by the gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_proposal_rejected: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<Reason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub n: usize,
    pub correct: usize,
    pub failures: usize,
    pub errored: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub categories: IndexMap<String, CategoryScore>,
    pub records: Vec<QuestionRecord>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl BenchReport {
    pub fn from_records(records: Vec<QuestionRecord>) -> Self {
        let mut categories: IndexMap<String, CategoryScore> = IndexMap::new();
        for c in Category::ALL {
            if records.iter().any(|r| r.category == c) {
                categories.insert(c.name().into(), CategoryScore::default());
            }
        }
        for r in &records {
            let s = categories.get_mut(r.category.name()).expect("inserted above");
            s.n += 1;
            s.correct += usize::from(r.correct);
            s.failures += usize::from(r.status == RecordStatus::Failure);
            s.errored += usize::from(r.status == RecordStatus::Error);
        }
        for s in categories.values_mut() {
            s.accuracy = ratio(s.correct, s.n);
        }
        let correct = records.iter().filter(|r| r.correct).count();
        BenchReport {
            n: records.len(),
            correct,
            accuracy: ratio(correct, records.len()),
            categories,
            records,
        }
    }

    /// Accuracy table: one column per category plus the overall score.
    pub fn render_table(&self) -> String {
        let mut header = vec!["system".to_string()];
        let mut acc = vec!["agent".to_string()];
        let mut n = vec!["n".to_string()];
        for (name, s) in &self.categories {
            header.push(name.clone());
            acc.push(format!("{:.2}", s.accuracy));
            n.push(s.n.to_string());
        }
        header.push("overall".into());
        acc.push(format!("{:.2}", self.accuracy));
        n.push(self.n.to_string());
        let widths: Vec<usize> = (0..header.len())
            .map(|i| header[i].len().max(acc[i].len()).max(n[i].len()))
            .collect();
        let row = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let mut out = row(&header);
        let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
        out.push_str(&row(&acc));
        out.push_str(&row(&n));
        out
    }
}

/// Score one agent result against the question's truth with the question
/// intent's answer schema.
pub fn is_correct(q: &BenchQuestion, result: &AgentResult) -> bool {
    match &result.outcome {
        Outcome::Answer { answer, .. } => result.intent.schema.equivalent(answer, &q.answer),
        Outcome::Failure { .. } => false,
    }
}

/// Answer one question with a fresh store and backend.
pub fn run_question(q: &BenchQuestion, backend: &BenchBackend, options: &BenchOptions) -> Result<AgentResult, String> {
    let store = q.store(options.withhold_series).map_err(|e| e.to_string())?;
    let mut b = backend.open(q, options.budget).map_err(|e| e.to_string())?;
    run_with_backend(&q.question, store, &mut b, AgentConfig::with_budget(options.budget)).map_err(|e| e.to_string())
}

fn record(q: &BenchQuestion, result: &Result<AgentResult, String>) -> QuestionRecord {
    match result {
        Ok(r) => QuestionRecord {
            id: q.id.clone(),
            category: q.category,
            status: if r.is_failure() {
                RecordStatus::Failure
            } else {
                RecordStatus::Answer
            },
            answer: r.answer().map(str::to_string),
            expected: q.answer.clone(),
            correct: is_correct(q, r),
            gate_rounds: r.gate_rounds,
            steps: r.trace.steps.len(),
            llm_calls: r.llm_calls,
            first_proposal_rejected: r
                .trace
                .steps
                .iter()
                .find_map(|s| s.gate.as_ref())
                .map(|g| !g.accepted()),
            reasons: match &r.outcome {
                Outcome::Failure { reasons } => reasons.clone(),
                Outcome::Answer { .. } => Vec::new(),
            },
            error: None,
        },
        Err(e) => QuestionRecord {
            id: q.id.clone(),
            category: q.category,
            status: RecordStatus::Error,
            answer: None,
            expected: q.answer.clone(),
            correct: false,
            gate_rounds: 0,
            steps: 0,
            llm_calls: 0,
            first_proposal_rejected: None,
            reasons: Vec::new(),
            error: Some(e.clone()),
        },
    }
}

/// Run every question and keep the agent results alongside the report.
pub fn run_benchmark_with_results(
    questions: &[BenchQuestion],
    backend: &BenchBackend,
    options: &BenchOptions,
) -> Result<(BenchReport, Vec<Result<AgentResult, String>>), HarnessError> {
    let results = crate::parallel::map(questions, options.parallelism, |q| run_question(q, backend, options));
    if let Some(dir) = &options.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        for (q, r) in questions.iter().zip(&results) {
            if let Ok(r) = r {
                let path = dir.join(format!("{}.json", q.id));
                std::fs::write(&path, trace_to_string(r))
                    .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            }
        }
    }
    let records = questions.iter().zip(&results).map(|(q, r)| record(q, r)).collect();
    Ok((BenchReport::from_records(records), results))
}

pub fn run_benchmark(
    questions: &[BenchQuestion],
    backend: &BenchBackend,
    options: &BenchOptions,
) -> Result<BenchReport, HarnessError> {
    run_benchmark_with_results(questions, backend, options).map(|(r, _)| r)
}

/// Intent class a question is routed to; used to check generator coverage.
pub fn intent_class(q: &BenchQuestion) -> String {
    detect_question_intents(&q.question).task
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed(count: usize, seed: u64) -> Vec<BenchQuestion> {
        Category::ALL
            .iter()
            .flat_map(|&c| generate_synthetic(c, count, seed))
            .collect()
    }

    #[test]
    fn categories_route_to_intended_classes() {
        let expected = [
            "trend_direction",
            "seasonality_type",
            "MCQ_anomaly_location",
            "stationarity_query",
            "noise_type",
            "similarity_choice",
            "relation_lagged",
            "causality_direction",
            "two_series_comparison",
        ];
        for (c, class) in Category::ALL.iter().zip(expected) {
            let q = &generate_synthetic(*c, 1, 0)[0];
            assert_eq!(intent_class(q), class, "{}", c.name());
        }
    }

    #[test]
    fn ideal_policy_scores_and_is_grounded() {
        let qs = mixed(2, 9);
        let (report, results) =
            run_benchmark_with_results(&qs, &BenchBackend::Policy(Policy::Ideal), &BenchOptions::default()).unwrap();
        for r in results.iter().flatten() {
            r.check_grounding().unwrap();
        }
        let bad: Vec<_> = report.records.iter().filter(|r| !r.correct).collect();
        assert!(bad.is_empty(), "{bad:#?}");
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn evidence_free_is_always_rejected() {
        let qs = mixed(1, 4);
        let options = BenchOptions {
            budget: 3,
            ..BenchOptions::default()
        };
        let report = run_benchmark(&qs, &BenchBackend::Policy(Policy::EvidenceFree), &options).unwrap();
        assert_eq!(report.correct, 0);
        assert!(report.records.iter().all(|r| r.first_proposal_rejected == Some(true)));
        assert!(report.records.iter().all(|r| r.status == RecordStatus::Failure));
    }

    #[test]
    fn empty_dataset_gives_empty_report() {
        let report = run_benchmark(&[], &BenchBackend::Policy(Policy::Ideal), &BenchOptions::default()).unwrap();
        assert_eq!(report.n, 0);
        assert_eq!(report.accuracy, 0.0);
        assert!(report.categories.is_empty());
    }

    #[test]
    fn score_conservation() {
        let qs = mixed(1, 2);
        let report = run_benchmark(&qs, &BenchBackend::Policy(Policy::Ideal), &BenchOptions::default()).unwrap();
        assert_eq!(report.categories.values().map(|s| s.n).sum::<usize>(), qs.len());
        assert!(report
            .categories
            .values()
            .all(|s| s.correct <= s.n && (0.0..=1.0).contains(&s.accuracy)));
        let table = report.render_table();
        assert_eq!(table.lines().count(), 4);
        assert!(table.contains("two_series_cloudy_week"));
    }

    #[test]
    fn dataset_round_trip() {
        let qs = mixed(1, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, dataset_to_jsonl(&qs)).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), qs);
    }

    #[test]
    fn withheld_file_series_keep_names_and_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let mut series = Vec::new();
        for (name, n) in [("a", 3), ("b", 4)] {
            let path = dir.path().join(format!("{name}.csv"));
            let rows: String = (0..n).map(|i| format!("{i},{}\n", i + 1)).collect();
            let rows = format!("t,v\n{rows}");
            std::fs::write(&path, rows).unwrap();
            series.push(SeriesSource::File {
                name: name.into(),
                path,
            });
        }
        let q = BenchQuestion {
            id: "q".into(),
            category: Category::Trend,
            question: "Is the trend of series 'a' upward, downward or flat?".into(),
            series,
            options: None,
            answer: "up".into(),
            provenance: Provenance::External { file: "d.jsonl".into() },
        };
        let open = q.store(false).unwrap();
        let hidden = q.store(true).unwrap();
        assert_eq!(hidden.names(), open.names());
        for name in ["a", "b"] {
            let s = hidden.get(name).unwrap();
            assert_eq!(s.len(), open.get(name).unwrap().len());
            assert!(s.channel(0).iter().all(|&v| v == 0.0));
        }
    }
}
