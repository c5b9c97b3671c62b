//! Loop invariants under arbitrary reasoner behaviour: the budget bounds
//! every run, the evidence log only grows, and runs are reproducible.

use proptest::prelude::*;
use sha2::{Digest, Sha256};

use seriesqa::agent::{run_with_backend, trace_to_string, AgentConfig, AgentRun};
use seriesqa::llm::{ChatBackend, ChatMessage, LlmError, CRITIC_MARKER};
use seriesqa::series::{SeriesStore, TimeSeries};

const QUESTION: &str = "Is the trend of series 'series' upward, downward or flat?";

/// Turns a reasoner might produce: valid calls, bad calls, garbage and
/// answers with or without evidence.
const TURNS: [&str; 8] = [
    "Thought: classify.\nAction: trend_classifier\nAction Input: {\"name\": \"series\"}",
    "Thought: check.\nAction: trend_classifier\nAction Input: {\"name\": \"series\", \"alpha\": 0.999}",
    "Thought: wrong series.\nAction: trend_classifier\nAction Input: {\"name\": \"missing\"}",
    "Thought: no such tool.\nAction: crystal_ball\nAction Input: {}",
    "I am not sure what to do next.",
    "Thought: done.\nFinal Answer: flat",
    "Thought: done.\nFinal Answer: banana",
    "Thought: segment.\nAction: segment_series\nAction Input: {\"name\": \"series\", \"k\": 3}",
];

/// Reasoner replies follow `script` cyclically; critic calls get a fixed
/// remark. Counts every call independently of the agent.
struct Cycle {
    script: Vec<usize>,
    next: usize,
    calls: usize,
}

impl ChatBackend for Cycle {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self.calls += 1;
        if messages.iter().any(|m| m.content.starts_with(CRITIC_MARKER)) {
            return Ok("The step looks reasonable.".into());
        }
        let turn = TURNS[self.script[self.next % self.script.len()]];
        self.next += 1;
        Ok(turn.into())
    }
}

fn store(seed: u64) -> SeriesStore {
    let values: Vec<f64> = (0..60u64)
        .map(|t| ((t.wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f64) / 100.0)
        .collect();
    let mut s = SeriesStore::new();
    s.insert(TimeSeries::from_values("series", values).unwrap()).unwrap();
    s
}

fn digest(run: &AgentRun, upto: usize) -> Vec<u8> {
    let entries = &run.log().entries()[..upto];
    Sha256::digest(serde_json::to_vec(entries).unwrap()).to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_bounds_steps_and_llm_calls(
        script in prop::collection::vec(0..TURNS.len(), 1..10),
        budget in 1usize..10,
        seed in any::<u64>(),
    ) {
        let mut backend = Cycle { script, next: 0, calls: 0 };
        let result = run_with_backend(QUESTION, store(seed), &mut backend, AgentConfig::with_budget(budget)).unwrap();
        prop_assert!(result.trace.steps.len() <= budget);
        prop_assert_eq!(result.llm_calls, backend.calls);
        prop_assert!(backend.calls <= 2 * budget + result.gate_rounds);
        prop_assert!(result.answer().is_some() != result.is_failure());
        prop_assert!(result.check_grounding().is_ok());
    }

    #[test]
    fn evidence_log_is_append_only(
        script in prop::collection::vec(0..TURNS.len(), 1..10),
        budget in 1usize..10,
    ) {
        let mut backend = Cycle { script, next: 0, calls: 0 };
        let mut run = AgentRun::new(QUESTION, store(3), AgentConfig::with_budget(budget)).unwrap();
        let mut prefix: Vec<(usize, Vec<u8>)> = Vec::new();
        while !run.is_finished() {
            run.advance(&mut backend).unwrap();
            for (len, hash) in &prefix {
                prop_assert!(run.log().len() >= *len);
                prop_assert_eq!(&digest(&run, *len), hash);
            }
            prefix.push((run.log().len(), digest(&run, run.log().len())));
        }
    }

    #[test]
    fn runs_are_reproducible(
        script in prop::collection::vec(0..TURNS.len(), 1..10),
        budget in 1usize..10,
        seed in any::<u64>(),
    ) {
        let run = |script: Vec<usize>| {
            let mut backend = Cycle { script, next: 0, calls: 0 };
            trace_to_string(&run_with_backend(QUESTION, store(seed), &mut backend, AgentConfig::with_budget(budget)).unwrap())
        };
        prop_assert_eq!(run(script.clone()), run(script));
    }
}
