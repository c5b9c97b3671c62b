//! Acceptance suite. Runs without the libtest harness so that the seven
//! pass/fail lines always reach the terminal.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Map, Value};

use seriesqa::agent::{run_with_backend, trace_to_string, AgentConfig, AgentResult};
use seriesqa::harness::fixtures::{ideal_turns, reasoner_entries};
use seriesqa::harness::{
    generate_synthetic, replay_case_study, run_benchmark_with_results, BenchBackend, BenchOptions, BenchQuestion,
    Category, Policy,
};
use seriesqa::llm::prompt::{
    render_critic_prompt, render_reasoner_prompt, tool_descs, CriticContext, CRITIC_TEMPLATE, REASONER_TEMPLATE,
};
use seriesqa::llm::ScriptedBackend;
use seriesqa::oversight::{contradictions, CoverageState, UNDECIDABLE};
use seriesqa::series::{SeriesStore, TimeSeries};
use seriesqa::toolkit::{ArgInput, ObsValue, Toolkit};

// Criterion 1.
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_SERIES: usize = 100;
const DTW_MAX_LEN: usize = 8;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);

// Criterion 2.
const TREND_NOISE_SEEDS: usize = 500;
const TREND_FLAT_MIN: f64 = 0.95;
const TREND_RAMPS: usize = 100;
const SPIKE_INSTANCES: usize = 200;
const SPIKE_MIN: f64 = 0.95;
const SEASON_INSTANCES: usize = 200;
const SEASON_MIN: f64 = 0.95;
const SEASON_TOL: usize = 1;
const STEP_INSTANCES: usize = 200;
const STEP_MIN: f64 = 0.90;
const STEP_TOL: usize = 5;
const UNIT_ROOT_SEEDS: usize = 100;
const UNIT_ROOT_MIN: f64 = 0.90;
const GRANGER_SEEDS: usize = 100;
const GRANGER_TP_MIN: f64 = 0.95;
const GRANGER_FP_MAX: f64 = 0.10;
const CALIBRATION_BUDGET: Duration = Duration::from_secs(300);

// Criterion 3.
const GATE_MIN_FIXTURES: usize = 50;
const GATE_BUDGET_STEPS: usize = 6;

// Criterion 5.
const BENCH_QUESTIONS: usize = 100;
const BENCH_MIN_CATEGORIES: usize = 8;
const BENCH_MIN_ACCURACY: f64 = 0.90;
const BENCH_SEED: u64 = 7;
const BENCH_BUDGET: Duration = Duration::from_secs(300);

type Check = Result<String, String>;
type Snapshot = (String, Vec<(String, Vec<u8>)>);
type Criterion = (&'static str, fn() -> Check);

fn rng(stream: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream.wrapping_mul(1_000_003) + i as u64)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn store_of(series: &[(&str, Vec<f64>)]) -> SeriesStore {
    let mut store = SeriesStore::new();
    for (name, values) in series {
        store
            .insert(TimeSeries::from_values(*name, values.clone()).unwrap())
            .unwrap();
    }
    store
}

fn call(store: &mut SeriesStore, tool: &str, args: Value) -> ObsValue {
    let map: Map<String, Value> = args.as_object().cloned().unwrap();
    Toolkit::new()
        .dispatch(tool, &ArgInput::Named(map), None, store, None)
        .primary
        .value
}

fn call1(x: &[f64], tool: &str, mut args: Value) -> (ObsValue, SeriesStore) {
    let mut store = store_of(&[("x", x.to_vec())]);
    args["name"] = json!("x");
    (call(&mut store, tool, args), store)
}

fn call2(x: &[f64], y: &[f64], tool: &str, mut args: Value) -> ObsValue {
    let mut store = store_of(&[("x", x.to_vec()), ("y", y.to_vec())]);
    args["name1"] = json!("x");
    args["name2"] = json!("y");
    call(&mut store, tool, args)
}

fn real(v: &ObsValue) -> Result<f64, String> {
    match v {
        ObsValue::Real { value } => Ok(*value),
        other => Err(format!("expected a real, got {other:?}")),
    }
}

fn label(v: &ObsValue) -> String {
    match v {
        ObsValue::Category { label } => label.clone(),
        other => format!("{other:?}"),
    }
}

fn close(what: &str, got: f64, want: f64) -> Result<(), String> {
    if (got - want).abs() <= ORACLE_TOL {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, oracle {want}"))
    }
}

fn rate(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

// ---------------------------------------------------------------------------
// Brute-force oracles, written without the crate's numeric helpers.

fn o_mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

/// Sample variance from pairwise squared differences.
fn o_std(x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (x[i] - x[j]) * (x[i] - x[j]);
        }
    }
    (s / (n * (n - 1)) as f64).sqrt()
}

/// Linear-interpolation quantile; order statistics found by counting.
fn o_quantile(x: &[f64], q: f64) -> f64 {
    let order_stat = |k: usize| {
        *x.iter()
            .find(|&&v| {
                let less = x.iter().filter(|&&u| u < v).count();
                let equal = x.iter().filter(|&&u| u == v).count();
                less <= k && k < less + equal
            })
            .unwrap()
    };
    let h = (x.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    order_stat(lo) + (h - lo as f64) * (order_stat(hi) - order_stat(lo))
}

fn o_autocorr(x: &[f64], lag: usize) -> f64 {
    let m = o_mean(x);
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..x.len() {
        den += (x[t] - m) * (x[t] - m);
        if t + lag < x.len() {
            num += (x[t] - m) * (x[t + lag] - m);
        }
    }
    num / den
}

/// Pearson through raw moment sums.
fn o_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn o_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pairs x[i] with y[i + lag].
fn o_lagged(x: &[f64], y: &[f64], lag: i64) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..x.len() as i64 {
        let j = i + lag;
        if j >= 0 && j < y.len() as i64 {
            a.push(x[i as usize]);
            b.push(y[j as usize]);
        }
    }
    (a, b)
}

/// Minimum over every monotone warping path of the summed squared cost.
fn o_dtw(x: &[f64], y: &[f64]) -> f64 {
    fn walk(x: &[f64], y: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (x[i] - y[j]) * (x[i] - y[j]);
        if i + 1 == x.len() && j + 1 == y.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < x.len() {
            walk(x, y, i + 1, j, acc, best);
        }
        if j + 1 < y.len() {
            walk(x, y, i, j + 1, acc, best);
        }
        if i + 1 < x.len() && j + 1 < y.len() {
            walk(x, y, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(x, y, 0, 0, 0.0, &mut best);
    best.sqrt()
}

fn random_series(rng: &mut ChaCha8Rng, min_len: usize, max_len: usize) -> Vec<f64> {
    let n = rng.random_range(min_len..=max_len);
    let scale = rng.random_range(0.1..10.0);
    let offset = rng.random_range(-20.0..20.0);
    gaussian(rng, n, 1.0).into_iter().map(|v| offset + scale * v).collect()
}

// ---------------------------------------------------------------------------
// Criterion 1.

fn oracle_suite() -> Check {
    let started = Instant::now();
    let mut checked = 0usize;
    for i in 0..ORACLE_SERIES {
        let mut r = rng(1, i);
        let x = random_series(&mut r, 20, 200);
        let n = x.len();

        let a = r.random_range(0..n - 2);
        let b = r.random_range(a + 2..=n);
        for range in [None, Some((a, b))] {
            let args = match range {
                None => json!({}),
                Some((a, b)) => json!({"range": [a, b]}),
            };
            let w = range.map_or(&x[..], |(a, b)| &x[a..b]);
            match call1(&x, "summary_stats", args).0 {
                ObsValue::Stats {
                    mean,
                    std,
                    min,
                    max,
                    n: count,
                } => {
                    close("summary mean", mean, o_mean(w))?;
                    close("summary std", std, o_std(w))?;
                    close("summary min", min, w.iter().copied().fold(f64::INFINITY, f64::min))?;
                    close("summary max", max, w.iter().copied().fold(f64::NEG_INFINITY, f64::max))?;
                    if count != w.len() {
                        return Err(format!("summary n {count} != {}", w.len()));
                    }
                }
                other => return Err(format!("summary_stats returned {other:?}")),
            }
        }

        let window = r.random_range(2..=n.min(30));
        let step = r.random_range(1..=3);
        let q = r.random_range(0.0..1.0);
        for stat in ["mean", "std", "quantile"] {
            let (v, store) = call1(
                &x,
                "rolling_stat",
                json!({"stat": stat, "window": window, "step": step, "q": q}),
            );
            let ObsValue::Series { series } = v else {
                return Err(format!("rolling_stat {stat} returned {v:?}"));
            };
            let got = store.get(&series[0].name).unwrap().channel(0).to_vec();
            let ends: Vec<usize> = (window..=n).step_by(step).collect();
            if got.len() != ends.len() {
                return Err(format!("rolling {stat}: {} values, expected {}", got.len(), ends.len()));
            }
            for (g, e) in got.iter().zip(&ends) {
                let w = &x[e - window..*e];
                let want = match stat {
                    "mean" => o_mean(w),
                    "std" => o_std(w),
                    _ => o_quantile(w, q),
                };
                close(&format!("rolling {stat}"), *g, want)?;
            }
        }

        let q = r.random_range(0.001..0.999);
        close(
            "quantile_value",
            real(&call1(&x, "quantile_value", json!({"q": q})).0)?,
            o_quantile(&x, q),
        )?;

        let lag = r.random_range(0..n);
        close(
            "autocorr",
            real(&call1(&x, "autocorr", json!({"lag": lag})).0)?,
            o_autocorr(&x, lag),
        )?;

        let mut y = random_series(&mut r, n, n);
        if i % 4 == 0 {
            // Ties exercise the average-rank rule: snap to a grid of half
            // the spread so that every overlap stays non-constant.
            let m = o_mean(&y);
            let grid = o_std(&y) / 2.0;
            y.iter_mut().for_each(|v| *v = m + ((*v - m) / grid).round() * grid);
        }
        let max_lag = r.random_range(0..(n - 10).min(15) + 1);
        let lag = r.random_range(-(max_lag as i64)..=max_lag as i64);
        for method in ["pearson", "spearman"] {
            let got = real(&call2(&x, &y, "corr_relation", json!({"lag": lag, "method": method})))?;
            let (a, b) = o_lagged(&x, &y, lag);
            let want = if method == "pearson" {
                o_pearson(&a, &b)
            } else {
                o_pearson(&o_ranks(&a), &o_ranks(&b))
            };
            close(&format!("corr_relation {method}"), got, want)?;
        }
        match call2(&x, &y, "cross_correlation", json!({"max_lag": max_lag})) {
            ObsValue::CrossCorrelation { lags, ccf, .. } => {
                let want_lags: Vec<i64> = (-(max_lag as i64)..=max_lag as i64).collect();
                if lags != want_lags {
                    return Err(format!("cross_correlation lags {lags:?}"));
                }
                for (l, c) in lags.iter().zip(&ccf) {
                    let (a, b) = o_lagged(&x, &y, *l);
                    close(&format!("cross_correlation lag {l}"), *c, o_pearson(&a, &b))?;
                }
            }
            other => return Err(format!("cross_correlation returned {other:?}")),
        }
        checked += 1;
    }

    let mut dtw_pairs = 0usize;
    let mut r = rng(11, 0);
    for n in 1..=DTW_MAX_LEN {
        for m in 1..=DTW_MAX_LEN {
            for trial in 0..3 {
                let (x, y): (Vec<f64>, Vec<f64>) = if trial < 2 {
                    // Integer values keep every path sum exact.
                    (
                        (0..n).map(|_| r.random_range(-9..=9) as f64).collect(),
                        (0..m).map(|_| r.random_range(-9..=9) as f64).collect(),
                    )
                } else {
                    (gaussian(&mut r, n, 1.0), gaussian(&mut r, m, 1.0))
                };
                let got = real(&call2(&x, &y, "dtw_distance", json!({})))?;
                let want = o_dtw(&x, &y);
                let ok = if trial < 2 {
                    got == want
                } else {
                    (got - want).abs() <= 1e-12
                };
                if !ok {
                    return Err(format!("dtw {x:?} vs {y:?}: got {got}, exhaustive {want}"));
                }
                dtw_pairs += 1;
            }
        }
    }

    let elapsed = started.elapsed();
    if elapsed > ORACLE_BUDGET {
        return Err(format!("runtime {elapsed:?} exceeds {ORACLE_BUDGET:?}"));
    }
    Ok(format!(
        "{checked} random series per tool within {ORACLE_TOL:e}; {dtw_pairs} DTW pairs up to T={DTW_MAX_LEN} match exhaustive paths; {elapsed:.1?}"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 2.

fn calibration() -> Check {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut judge = |name: &str, value: f64, ok: bool, bound: &str| {
        lines.push(format!("{name} {value:.3} ({bound})"));
        if !ok {
            failures.push(name.to_string());
        }
    };

    // Trend: N(0, 1) noise of length 100 is flat; noise-free ramps are not.
    let flat = (0..TREND_NOISE_SEEDS)
        .filter(|&i| label(&call1(&gaussian(&mut rng(2, i), 100, 1.0), "trend_classifier", json!({})).0) == "flat")
        .count();
    let flat_rate = rate(flat, TREND_NOISE_SEEDS);
    judge("trend flat", flat_rate, flat_rate >= TREND_FLAT_MIN, ">= 0.95");
    let ramps = (0..TREND_RAMPS)
        .filter(|&i| {
            let mut r = rng(3, i);
            let up = i % 2 == 0;
            let slope = r.random_range(0.001..1.0) * if up { 1.0 } else { -1.0 };
            let level = r.random_range(-10.0..10.0);
            let x: Vec<f64> = (0..r.random_range(10..200)).map(|t| level + slope * t as f64).collect();
            label(&call1(&x, "trend_classifier", json!({})).0) == if up { "up" } else { "down" }
        })
        .count();
    let ramp_rate = rate(ramps, TREND_RAMPS);
    judge("trend ramps", ramp_rate, ramps == TREND_RAMPS, "= 1");

    // Anomaly: one spike of 2.5 to 4 on a sinusoid with N(0, 0.2) noise.
    let located = (0..SPIKE_INSTANCES)
        .filter(|&i| {
            let mut r = rng(4, i);
            let n = 120;
            let at = r.random_range(5..n - 5);
            let size = r.random_range(2.5..4.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let period = r.random_range(15.0..30.0);
            let e = gaussian(&mut r, n, 0.2);
            let mut x: Vec<f64> = (0..n)
                .map(|t| (std::f64::consts::TAU * t as f64 / period).sin() + e[t])
                .collect();
            x[at] += size;
            match call1(&x, "anomaly_classifier", json!({})).0 {
                ObsValue::IndexSet { events, .. } => events
                    .iter()
                    .max_by(|a, b| a.score.abs().total_cmp(&b.score.abs()))
                    .is_some_and(|e| e.start == at),
                _ => false,
            }
        })
        .count();
    let spike_rate = rate(located, SPIKE_INSTANCES);
    judge("anomaly spike", spike_rate, spike_rate >= SPIKE_MIN, ">= 0.95");

    // Seasonality: sinusoid of period 6..=24 over 6..=10 cycles, N(0, 0.3).
    let periods = (0..SEASON_INSTANCES)
        .filter(|&i| {
            let mut r = rng(5, i);
            let p = r.random_range(6..=24usize);
            let n = p * r.random_range(6..=10usize);
            let amp = r.random_range(1.0..3.0);
            let phase = r.random_range(0.0..std::f64::consts::TAU);
            let e = gaussian(&mut r, n, 0.3);
            let x: Vec<f64> = (0..n)
                .map(|t| amp * (std::f64::consts::TAU * t as f64 / p as f64 + phase).sin() + e[t])
                .collect();
            let mut store = store_of(&[("x", x)]);
            let map = json!({"name": "x"}).as_object().cloned().unwrap();
            let obs = Toolkit::new()
                .dispatch("seasonality_detector", &ArgInput::Named(map), None, &mut store, None)
                .primary;
            obs.diagnostics
                .get("period")
                .and_then(Value::as_u64)
                .is_some_and(|g| (g as usize).abs_diff(p) <= SEASON_TOL)
        })
        .count();
    let season_rate = rate(periods, SEASON_INSTANCES);
    judge("seasonality period", season_rate, season_rate >= SEASON_MIN, ">= 0.95");

    // Change point: one mean shift of 1.5 to 3 sd inside a length-200 series.
    let steps = (0..STEP_INSTANCES)
        .filter(|&i| {
            let mut r = rng(6, i);
            let n = 200;
            let at = r.random_range(30..n - 30);
            let shift = r.random_range(1.5..3.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let x: Vec<f64> = gaussian(&mut r, n, 1.0)
                .into_iter()
                .enumerate()
                .map(|(t, e)| e + if t >= at { shift } else { 0.0 })
                .collect();
            match call1(&x, "change_point_detector", json!({})).0 {
                ObsValue::IndexSet { indices, .. } => indices.iter().any(|&c| c.abs_diff(at) <= STEP_TOL),
                _ => false,
            }
        })
        .count();
    let step_rate = rate(steps, STEP_INSTANCES);
    judge("change point", step_rate, step_rate >= STEP_MIN, ">= 0.90");

    // Unit root: Gaussian random walk vs white noise, length 200.
    for test in ["adf", "kpss"] {
        for (class, want) in [("random walk", "nonstationary"), ("white noise", "stationary")] {
            let hits = (0..UNIT_ROOT_SEEDS)
                .filter(|&i| {
                    let e = gaussian(&mut rng(7, i), 200, 1.0);
                    let x: Vec<f64> = if class == "random walk" {
                        e.iter()
                            .scan(0.0, |s, v| {
                                *s += v;
                                Some(*s)
                            })
                            .collect()
                    } else {
                        e
                    };
                    label(&call1(&x, "stationarity_test", json!({"test": test})).0) == want
                })
                .count();
            let hit_rate = rate(hits, UNIT_ROOT_SEEDS);
            judge(
                &format!("{test} {class}"),
                hit_rate,
                hit_rate >= UNIT_ROOT_MIN,
                ">= 0.90",
            );
        }
    }

    // Granger, maxlag 2, length 200: y_t = 0.5 y_{t-1} + 0.7 x_{t-1} + e_t
    // against an independent AR(1) pair.
    let decide = |coupling: f64, stream: u64| {
        (0..GRANGER_SEEDS)
            .filter(|&i| {
                let mut r = rng(stream, i);
                let n = 200;
                let x = gaussian(&mut r, n, 1.0);
                let e = gaussian(&mut r, n, 1.0);
                let mut y = vec![0.0; n];
                for t in 1..n {
                    y[t] = 0.5 * y[t - 1] + coupling * x[t - 1] + e[t];
                }
                matches!(call2(&x, &y, "granger_causality", json!({"maxlag": 2})), ObsValue::Granger { decision, .. } if decision == "yes")
            })
            .count()
    };
    let tp = rate(decide(0.7, 8), GRANGER_SEEDS);
    let fp = rate(decide(0.0, 9), GRANGER_SEEDS);
    judge("granger true positive", tp, tp >= GRANGER_TP_MIN, ">= 0.95");
    judge("granger false positive", fp, fp <= GRANGER_FP_MAX, "<= 0.10");

    let elapsed = started.elapsed();
    let summary = format!("{}; {elapsed:.1?}", lines.join(", "));
    if elapsed > CALIBRATION_BUDGET {
        return Err(format!("runtime {elapsed:?} exceeds {CALIBRATION_BUDGET:?}; {summary}"));
    }
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("below threshold: {}; {summary}", failures.join(", ")))
    }
}

// ---------------------------------------------------------------------------
// Criterion 3.

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Adversary {
    EvidenceFree,
    OutOfSchema,
    PartialEvidence,
    ContradictionThenAnswer,
    ContradictionThenUndecidable,
    ContradictionThenResolve,
}

fn answer_turn(text: &str) -> String {
    format!("Thought: I now know the final answer.\nFinal Answer: {text}")
}

fn action_turn(tool: &str, input: Value) -> String {
    format!("Thought: Check the evidence.\nAction: {tool}\nAction Input: {input}")
}

fn pad(mut turns: Vec<String>, filler: &str) -> Vec<String> {
    while turns.len() < GATE_BUDGET_STEPS {
        turns.push(answer_turn(filler));
    }
    turns
}

fn adversarial_turns(kind: Adversary, q: &BenchQuestion, variant: usize) -> Vec<String> {
    let mut ideal = ideal_turns(q);
    ideal.pop();
    let trend = |alpha: f64| action_turn("trend_classifier", json!({"name": "series", "alpha": alpha}));
    match kind {
        Adversary::EvidenceFree => pad(Vec::new(), &q.answer),
        Adversary::OutOfSchema => {
            let junk = ["banana", "The answer is purple."][variant % 2];
            ideal.push(answer_turn(junk));
            pad(ideal, junk)
        }
        Adversary::PartialEvidence => {
            ideal.truncate(1);
            pad(ideal, &q.answer)
        }
        Adversary::ContradictionThenAnswer => pad(vec![trend(0.999), trend(1e-12)], &q.answer),
        Adversary::ContradictionThenUndecidable => pad(vec![trend(0.999), trend(1e-12), trend(1e-12)], UNDECIDABLE),
        Adversary::ContradictionThenResolve => pad(vec![trend(0.999), trend(1e-12), trend(0.05)], &q.answer),
    }
}

/// Soundness audit of one run. `Ok(true)` when an answer was accepted.
fn audit(result: &AgentResult) -> Result<bool, String> {
    let Some(answer) = result.answer() else {
        return Ok(false);
    };
    result.check_grounding()?;
    let open: Vec<_> = contradictions(&result.log, &result.intent)
        .into_iter()
        .filter(|c| !c.is_resolved())
        .collect();
    if answer == UNDECIDABLE {
        if !open.iter().any(|c| c.is_unresolvable()) {
            return Err("UNDECIDABLE accepted without an unresolvable contradiction".into());
        }
        return Ok(true);
    }
    let gaps = CoverageState::from_log(&result.log, &result.intent).gaps;
    if !gaps.is_empty() {
        return Err(format!("accepted {answer:?} with gaps {gaps:?}"));
    }
    result
        .intent
        .schema
        .normalize(answer)
        .map_err(|e| format!("accepted {answer:?} outside the schema: {e}"))?;
    if !open.is_empty() {
        return Err(format!("accepted {answer:?} with {} open contradictions", open.len()));
    }
    Ok(true)
}

fn gate_soundness() -> Check {
    let mut fixtures: Vec<(Adversary, BenchQuestion, Vec<String>)> = Vec::new();
    for c in Category::ALL {
        for (i, q) in generate_synthetic(c, 3, 31).into_iter().enumerate() {
            fixtures.push((
                Adversary::EvidenceFree,
                q.clone(),
                adversarial_turns(Adversary::EvidenceFree, &q, i),
            ));
            if i < 2 {
                fixtures.push((
                    Adversary::OutOfSchema,
                    q.clone(),
                    adversarial_turns(Adversary::OutOfSchema, &q, i),
                ));
            }
            if matches!(c, Category::SimilarityChoice | Category::TwoSeriesCloudyWeek) {
                fixtures.push((
                    Adversary::PartialEvidence,
                    q.clone(),
                    adversarial_turns(Adversary::PartialEvidence, &q, i),
                ));
            }
        }
    }
    let flat: Vec<BenchQuestion> = generate_synthetic(Category::Trend, 40, 32)
        .into_iter()
        .filter(|q| q.answer == "flat")
        .take(3)
        .collect();
    for kind in [
        Adversary::ContradictionThenAnswer,
        Adversary::ContradictionThenUndecidable,
        Adversary::ContradictionThenResolve,
    ] {
        for (i, q) in flat.iter().enumerate() {
            fixtures.push((kind, q.clone(), adversarial_turns(kind, q, i)));
        }
    }
    if fixtures.len() < GATE_MIN_FIXTURES {
        return Err(format!("only {} fixtures", fixtures.len()));
    }

    let mut accepted = 0usize;
    let mut evidence_free = 0usize;
    for (kind, q, turns) in &fixtures {
        let mut backend = ScriptedBackend::new(reasoner_entries(turns.clone()));
        let result = run_with_backend(
            &q.question,
            q.store(false).map_err(|e| e.to_string())?,
            &mut backend,
            AgentConfig::with_budget(GATE_BUDGET_STEPS),
        )
        .map_err(|e| format!("{kind:?} {}: {e}", q.id))?;
        let was_accepted = audit(&result).map_err(|e| format!("{kind:?} {}: {e}", q.id))?;
        accepted += usize::from(was_accepted);
        let first_verdict = result
            .trace
            .steps
            .iter()
            .find_map(|s| s.gate.as_ref())
            .map(|g| g.accepted());
        match kind {
            Adversary::EvidenceFree => {
                if first_verdict != Some(false) {
                    return Err(format!("evidence-free answer on {} was not rejected first", q.id));
                }
                evidence_free += 1;
            }
            Adversary::ContradictionThenAnswer
            | Adversary::ContradictionThenUndecidable
            | Adversary::ContradictionThenResolve => {
                if contradictions(&result.log, &result.intent).is_empty() {
                    return Err(format!("{kind:?} on {} induced no contradiction", q.id));
                }
                if *kind == Adversary::ContradictionThenAnswer && was_accepted {
                    return Err(format!("{kind:?} on {} accepted over an open contradiction", q.id));
                }
            }
            _ => {}
        }
        if matches!(kind, Adversary::OutOfSchema | Adversary::PartialEvidence) && was_accepted {
            return Err(format!("{kind:?} on {} was accepted", q.id));
        }
    }
    Ok(format!(
        "{} fixtures, {accepted} accepted and all sound; {evidence_free}/{evidence_free} evidence-free answers rejected",
        fixtures.len()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 4.

fn replay() -> Check {
    let report = replay_case_study().map_err(|e| e.to_string())?;
    let feedback = report.result.trace.steps[0].feedback.clone().unwrap_or_default();
    if !feedback.contains("x must be 1-D") {
        return Err(format!("step-1 feedback lacks the error text: {feedback}"));
    }
    match report.first_failure() {
        None => Ok(format!("5/5 stages; answer {:?}", report.result.answer().unwrap_or(""))),
        Some(s) => Err(format!("stage {} ({}) failed: {}", s.stage, s.name, s.detail)),
    }
}

// ---------------------------------------------------------------------------
// Criterion 5.

fn benchmark_questions() -> Vec<BenchQuestion> {
    let per = BENCH_QUESTIONS / Category::ALL.len();
    let mut qs = Vec::new();
    for (k, c) in Category::ALL.iter().enumerate() {
        let extra = usize::from(k < BENCH_QUESTIONS % Category::ALL.len());
        qs.extend(generate_synthetic(*c, per + extra, BENCH_SEED));
    }
    qs
}

fn benchmark() -> Check {
    let started = Instant::now();
    let questions = benchmark_questions();
    let categories = Category::ALL
        .iter()
        .filter(|c| questions.iter().any(|q| q.category == **c))
        .count();
    if questions.len() != BENCH_QUESTIONS || categories < BENCH_MIN_CATEGORIES {
        return Err(format!("{} questions over {categories} categories", questions.len()));
    }
    let options = BenchOptions {
        parallelism: 0,
        ..BenchOptions::default()
    };
    let (report, results) = run_benchmark_with_results(&questions, &BenchBackend::Policy(Policy::Ideal), &options)
        .map_err(|e| e.to_string())?;
    for (q, r) in questions.iter().zip(&results) {
        let r = r.as_ref().map_err(|e| format!("{}: {e}", q.id))?;
        if r.answer().is_some() {
            r.check_grounding().map_err(|e| format!("{}: {e}", q.id))?;
        }
    }
    let elapsed = started.elapsed();
    let summary = format!(
        "accuracy {:.2} on {} questions over {categories} categories; {elapsed:.1?}",
        report.accuracy, report.n
    );
    if elapsed > BENCH_BUDGET {
        return Err(format!("runtime exceeds {BENCH_BUDGET:?}; {summary}"));
    }
    if report.accuracy < BENCH_MIN_ACCURACY {
        let wrong: Vec<&str> = report
            .records
            .iter()
            .filter(|r| !r.correct)
            .map(|r| r.id.as_str())
            .collect();
        return Err(format!("{summary}; wrong: {wrong:?}"));
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Criterion 6.

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Check {
    let ask = || {
        let report = replay_case_study().map_err(|e| e.to_string())?;
        Ok::<String, String>(trace_to_string(&report.result))
    };
    if ask()? != ask()? {
        return Err("ask traces differ between runs".into());
    }

    let questions: Vec<BenchQuestion> = Category::ALL
        .iter()
        .flat_map(|c| generate_synthetic(*c, 3, 99))
        .collect();
    let bench = |parallelism: usize| -> Result<Snapshot, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let options = BenchOptions {
            parallelism,
            trace_dir: Some(dir.path().to_path_buf()),
            ..BenchOptions::default()
        };
        let (report, _) = run_benchmark_with_results(&questions, &BenchBackend::Policy(Policy::Ideal), &options)
            .map_err(|e| e.to_string())?;
        Ok((serde_json::to_string_pretty(&report).unwrap(), files_of(dir.path())))
    };
    let first = bench(1)?;
    let second = bench(1)?;
    let parallel = bench(0)?;
    if first != second {
        return Err("bench report or traces differ between sequential runs".into());
    }
    if first != parallel {
        return Err("bench report or traces differ between sequential and parallel runs".into());
    }
    Ok(format!(
        "ask trace and bench report plus {} trace files byte-identical across runs and thread counts",
        first.1.len()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 7.

fn golden(name: &str) -> Result<String, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
}

fn prompt_fidelity() -> Check {
    let reasoner = golden("reasoner_prompt.txt")?;
    let critic = golden("critic_prompt.txt")?;
    if REASONER_TEMPLATE != reasoner {
        return Err("reasoner template differs from the golden file".into());
    }
    if CRITIC_TEMPLATE != critic {
        return Err("critic template differs from the golden file".into());
    }

    let kit = Toolkit::new();
    let specs: Vec<_> = kit.specs().cloned().collect();
    let question = "Is the trend of series 'series' upward, downward or flat?";
    let rendered = &render_reasoner_prompt(&specs, question, &[])[0].content;
    let names = specs.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ");
    let descs = tool_descs(&specs);
    let (head, rest) = reasoner.split_once("{tool_descs}").ok_or("golden lacks {tool_descs}")?;
    let (mid, rest) = rest.split_once("{tool_names}").ok_or("golden lacks {tool_names}")?;
    let (tail, end) = rest.split_once("{query}").ok_or("golden lacks {query}")?;
    let expected = format!("{head}{descs}{mid}{names}{tail}{question}{end}");
    if *rendered != expected {
        return Err("rendered reasoner prompt differs outside the slots".into());
    }

    let ctx = CriticContext {
        question: question.into(),
        task: "trend_direction".into(),
        schema: "one of up, down, flat".into(),
        gaps: vec!["trend_direction@series".into()],
        step: "Action: trend_classifier".into(),
        log: Vec::new(),
    };
    let rendered = &render_critic_prompt(&ctx)[0].content;
    if !rendered.starts_with(&format!("{critic}\n\n")) {
        return Err("rendered critic prompt does not open with the golden template".into());
    }
    Ok(format!(
        "reasoner ({} bytes) and critic ({} bytes) templates byte-match",
        reasoner.len(),
        critic.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("toolkit oracle suite", oracle_suite),
        ("detector calibration", calibration),
        ("gate soundness", gate_soundness),
        ("case-study replay", replay),
        ("scripted benchmark", benchmark),
        ("determinism", determinism),
        ("prompt fidelity", prompt_fidelity),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
