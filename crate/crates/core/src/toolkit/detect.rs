//! Detection and classification tools: series to labels or flagged indices.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use super::{
    choice, series_param, spec, Args, Event, EventKind, Family, ObsValue, OutputKind, ParamSpec, ParamType, ToolError,
    ToolFn, ToolOutput, ToolSpec,
};
use crate::stats;

pub const TREND_ALPHA: f64 = 0.05;
pub const ANOMALY_THRESHOLD: f64 = 3.0;
pub const ANOMALY_WINDOW: usize = 7;
pub const SEASONALITY_WEAK: f64 = 0.3;
pub const SEASONALITY_STRONG: f64 = 0.6;
pub const NOISE_ALPHA: f64 = 0.01;
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;
/// Default change-point penalty is this multiple of `ln T`.
pub const CHANGE_PENALTY_PER_LOG_T: f64 = 6.0;

pub(super) fn tools() -> Vec<(ToolSpec, ToolFn)> {
    let cat = |name, desc, params| spec(name, Family::Det, OutputKind::Category, desc, params);
    let idx = |name, desc, params| spec(name, Family::Det, OutputKind::IndexSet, desc, params);
    vec![
        (
            cat(
                "trend_classifier",
                "Classify the global or windowed trend as up, down or flat (OLS slope t-test)",
                vec![
                    series_param("name"),
                    ParamSpec::optional("window", ParamType::Range, "window [start, end) to classify"),
                    ParamSpec::with_default("alpha", ParamType::Real, json!(TREND_ALPHA), "significance level"),
                ],
            ),
            trend_classifier as ToolFn,
        ),
        (
            idx(
                "anomaly_classifier",
                "Flag anomalous points and spans (spike, dip, level_shift) by robust z-score against a local baseline",
                vec![
                    series_param("name"),
                    ParamSpec::with_default("threshold", ParamType::Real, json!(ANOMALY_THRESHOLD), "robust z-score threshold"),
                    ParamSpec::optional("window", ParamType::Count, "baseline window length (odd, default 7)"),
                ],
            ),
            anomaly_classifier,
        ),
        (
            cat(
                "seasonality_detector",
                "Detect periodicity from the autocorrelation of the detrended series; returns period and strength (none, weak, strong)",
                vec![
                    series_param("name"),
                    ParamSpec::optional("max_period", ParamType::Count, "largest period considered (default T/2)"),
                ],
            ),
            seasonality_detector,
        ),
        (
            idx(
                "change_point_detector",
                "Locate structural breaks in mean or variance by binary segmentation",
                vec![
                    series_param("name"),
                    ParamSpec::optional("penalty", ParamType::Real, "minimum cost gain per break (default 6 ln T)"),
                    ParamSpec::optional("n_cp", ParamType::Count, "exact number of breaks to return"),
                    ParamSpec::optional("min_size", ParamType::Count, "minimum segment length"),
                ],
            ),
            change_point_detector,
        ),
        (
            cat(
                "noise_profile",
                "Label residual noise as white or red from a lag-1 autocorrelation test",
                vec![
                    series_param("name"),
                    ParamSpec::optional("window", ParamType::Range, "window [start, end) to test"),
                ],
            ),
            noise_profile,
        ),
        (
            cat(
                "stationarity_test",
                "ADF or KPSS test at 5%; returns stationary or nonstationary plus the statistic",
                vec![
                    series_param("name"),
                    ParamSpec::with_default("test", choice(&["adf", "kpss"]), json!("adf"), "test to run"),
                ],
            ),
            stationarity_test,
        ),
        (
            idx(
                "spike_detector",
                "Locate isolated spikes and dips; detections closer than min_sep keep the largest",
                vec![
                    series_param("name"),
                    ParamSpec::with_default("threshold", ParamType::Real, json!(ANOMALY_THRESHOLD), "robust z-score threshold"),
                    ParamSpec::with_default("min_sep", ParamType::Count, json!(1), "minimum separation between detections"),
                ],
            ),
            spike_detector,
        ),
    ]
}

fn category(label: &str) -> ObsValue {
    ObsValue::Category {
        label: label.to_string(),
    }
}

/// Non-finite diagnostics are recorded as null.
fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::Null
    }
}

fn trend_classifier(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let (a, b) = args.window(&s, "window")?;
    let alpha = args.opt_real("alpha")?.unwrap_or(TREND_ALPHA);
    let y = &x[a..b];
    if y.len() < 3 {
        return Err(ToolError::new(format!(
            "trend needs at least 3 points, got {}",
            y.len()
        )));
    }
    let (label, slope, p) = trend(y, alpha);
    Ok(ToolOutput::value(category(label))
        .diag("slope", num(slope))
        .diag("p_value", num(p))
        .diag("window", json!([a, b])))
}

/// Trend label, slope and two-sided p-value.
pub fn trend(y: &[f64], alpha: f64) -> (&'static str, f64, f64) {
    let Some(fit) = stats::linear_trend(y) else {
        return ("flat", 0.0, 1.0);
    };
    let slope = fit.coef[1];
    let se = fit.std_err[1];
    let p = if se > 0.0 {
        stats::t_two_sided_p(slope / se, fit.dof)
    } else if slope.abs() > 1e-12 * (1.0 + fit.coef[0].abs()) {
        0.0
    } else {
        1.0
    };
    let label = if p < alpha && slope > 0.0 {
        "up"
    } else if p < alpha && slope < 0.0 {
        "down"
    } else {
        "flat"
    };
    (label, slope, p)
}

/// Nearest `2h` positions to `t` inside `[0, n)`, excluding `t` itself.
fn neighbourhood(t: usize, h: usize, n: usize) -> std::ops::Range<usize> {
    let width = (2 * h + 1).min(n);
    let start = t.saturating_sub(h).min(n - width);
    start..start + width
}

/// Smallest residual scale, as a fraction of the series' robust spread.
/// Keeps approximation error on noise-free signals from scoring as anomalies.
pub const SCALE_FLOOR: f64 = 0.05;

/// Robust z-scores of residuals against a leave-one-out local baseline,
/// and the residual scale. Each point's baseline is a local quadratic fit
/// to its unmasked neighbours. Masking is iterative: each round masks the
/// flagged points whose |z| is largest within their neighbourhood, so a
/// spike does not contaminate its neighbours' baselines. Residuals are
/// studentized by the fit leverage so edge extrapolations are not
/// over-scored.
pub fn robust_residual_z(x: &[f64], w: usize, threshold: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let h = w / 2;
    let floor = SCALE_FLOOR * stats::robust_scale(x);
    let mut masked = vec![false; n];
    let mut rounds = 0;
    loop {
        let (scores, reference) = local_residuals(x, w, &masked);
        let (z, scale) = standardize(&scores, &reference, floor);
        rounds += 1;
        let new: Vec<usize> = (0..n)
            .filter(|&t| !masked[t] && z[t].abs() > threshold)
            .filter(|&t| neighbourhood(t, h, n).all(|j| masked[j] || z[j].abs() <= z[t].abs()))
            .collect();
        if new.is_empty() || rounds > MASK_ROUNDS {
            return (z, scale);
        }
        for t in new {
            masked[t] = true;
        }
    }
}

/// Upper bound on masking rounds in the anomaly baseline.
const MASK_ROUNDS: usize = 8;

/// Per-point residual scores and the reference residuals that set their
/// scale. The score is the smallest studentized residual among a centred
/// local quadratic and two one-sided local linear fits. The minimum is
/// biased towards zero, so the scale comes from the centred fit alone.
fn local_residuals(x: &[f64], w: usize, masked: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let h = w / 2;
    let studentized = |t: usize, pts: &[usize], degree: usize| {
        local_poly(x, pts, t, degree).map(|(fit, leverage)| (x[t] - fit) / (1.0 + leverage).sqrt())
    };
    (0..n)
        .map(|t| {
            let free = |j: &usize| *j != t && !masked[*j];
            let centre: Vec<usize> = neighbourhood(t, h, n).filter(free).collect();
            let left: Vec<usize> = (t.saturating_sub(w - 1)..t).filter(free).collect();
            let right: Vec<usize> = (t + 1..(t + w).min(n)).filter(free).collect();
            let centred = studentized(t, &centre, 2);
            let score = [centred, studentized(t, &left, 1), studentized(t, &right, 1)]
                .into_iter()
                .flatten()
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or_else(|| {
                    let nb: Vec<f64> = neighbourhood(t, h, n).filter(|&j| j != t).map(|j| x[j]).collect();
                    x[t] - stats::median(&nb)
                });
            (score, centred.unwrap_or(score))
        })
        .unzip()
}

/// Least-squares polynomial through `pts` (up to `max_degree`, quadratic
/// only with five or more points, linear with fewer than five and at least
/// three) evaluated at `at`, with the leverage of `at`.
fn local_poly(x: &[f64], pts: &[usize], at: usize, max_degree: usize) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let degree = if pts.len() >= 5 {
        max_degree.min(2)
    } else {
        max_degree.min(1)
    };
    let row = |j: usize| -> Vec<f64> {
        let u = j as f64 - at as f64;
        (0..=degree).map(|k| u.powi(k as i32)).collect()
    };
    let design = DMatrix::from_row_iterator(pts.len(), degree + 1, pts.iter().flat_map(|&j| row(j)));
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|&j| x[j]));
    let gram = design.transpose() * &design;
    let inv = gram.try_inverse()?;
    let coef = &inv * design.transpose() * y;
    // Centered at `at`, so the prediction is the intercept and the
    // leverage is the (0, 0) entry of the inverse Gram matrix.
    Some((coef[0], inv[(0, 0)]))
}

/// `(r - median(r)) / max(robust_scale(reference), floor)`, the scale taken
/// over the non-degenerate reference residuals; a zero scale yields zeros.
fn standardize(r: &[f64], reference: &[f64], floor: f64) -> (Vec<f64>, f64) {
    let med = stats::median(r);
    let magnitude = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let informative: Vec<f64> = reference
        .iter()
        .copied()
        .filter(|v| v.abs() > 1e-9 * magnitude)
        .collect();
    let scale = if informative.is_empty() {
        0.0
    } else {
        stats::robust_scale(&informative)
    }
    .max(floor);
    if scale <= 1e-12 * magnitude || scale == 0.0 {
        return (vec![0.0; r.len()], 0.0);
    }
    (r.iter().map(|v| (v - med) / scale).collect(), scale)
}

fn baseline_window(args: &Args, n: usize) -> Result<usize, ToolError> {
    if n < 3 {
        return Err(ToolError::new(format!(
            "anomaly detection needs at least 3 points, got {n}"
        )));
    }
    match args.opt_count("window")? {
        Some(w) if w > n => Err(ToolError::new(format!(
            "window {w} is longer than the series ({n} points)"
        ))),
        Some(w) if w < 3 => Err(ToolError::new("window must be at least 3")),
        Some(w) => Ok(if w.is_multiple_of(2) { w - 1 } else { w }),
        None => {
            let w = ANOMALY_WINDOW.min(n);
            Ok(if w.is_multiple_of(2) { w - 1 } else { w })
        }
    }
}

fn positive_threshold(args: &Args) -> Result<f64, ToolError> {
    let t = args.opt_real("threshold")?.unwrap_or(ANOMALY_THRESHOLD);
    if t <= 0.0 {
        return Err(ToolError::new("threshold must be positive"));
    }
    Ok(t)
}

/// Full anomaly analysis: point spans plus level shifts.
pub fn anomalies(x: &[f64], w: usize, threshold: f64) -> (Vec<Event>, f64) {
    let n = x.len();
    let (z, scale) = robust_residual_z(x, w, threshold);
    let mut events = Vec::new();
    if scale == 0.0 {
        return (events, scale);
    }
    let l = (2 * w).max(10);
    let shifts = level_shifts(x, l, threshold, scale);
    let near_shift = |a: usize, b: usize| shifts.iter().any(|e| a + l >= e.start && b <= e.start + l);
    let mut t = 0;
    while t < n {
        if z[t].abs() <= threshold {
            t += 1;
            continue;
        }
        let sign = z[t].signum();
        let start = t;
        while t < n && z[t].abs() > threshold && z[t].signum() == sign {
            t += 1;
        }
        let end = t;
        if near_shift(start, end) {
            continue;
        }
        let peak = z[start..end]
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let kind = if sign > 0.0 { EventKind::Spike } else { EventKind::Dip };
        events.push(Event {
            start,
            end,
            kind,
            score: peak,
        });
    }
    events.extend(shifts);
    events.sort_by_key(|e| e.start);
    (events, scale)
}

/// Sustained median shifts: `d_t = median(x[t..t+l]) - median(x[t-l..t])`
/// must be extreme against the spread of `d`, against the point residual
/// scale and against the standard error of the two window levels.
/// Locations are refined by the best two-mean split.
fn level_shifts(x: &[f64], l: usize, threshold: f64, scale: f64) -> Vec<Event> {
    let n = x.len();
    if n < 2 * l + 1 {
        return Vec::new();
    }
    let ts: Vec<usize> = (l..=n - l).collect();
    let d: Vec<f64> = ts
        .iter()
        .map(|&t| stats::median(&x[t..t + l]) - stats::median(&x[t - l..t]))
        .collect();
    let (zd, dscale) = standardize(&d, &d, 0.0);
    if dscale == 0.0 {
        return Vec::new();
    }
    // A shift must also stand out against the spread inside its two
    // windows, so periodic swings do not register as shifts.
    let within = |t: usize| {
        let (a, b) = (stats::robust_scale(&x[t - l..t]), stats::robust_scale(&x[t..t + l]));
        ((a * a + b * b) / l as f64).sqrt()
    };
    let hit: Vec<bool> = d
        .iter()
        .zip(&zd)
        .zip(&ts)
        .map(|((dv, z), &t)| z.abs() > threshold && dv.abs() > threshold * scale.max(within(t)))
        .collect();
    let mut cps: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    while i < hit.len() {
        if !hit[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < hit.len() && hit[i] {
            i += 1;
        }
        let best = (start..i)
            .max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))
            .expect("non-empty run");
        let cp = refine_split(x, ts[best], l);
        if cps.last().is_none_or(|(prev, _)| cp > prev + l) {
            cps.push((cp, zd[best]));
        }
    }
    cps.iter()
        .enumerate()
        .map(|(k, &(cp, score))| Event {
            start: cp,
            end: cps.get(k + 1).map_or(n, |c| c.0),
            kind: EventKind::LevelShift,
            score,
        })
        .collect()
}

fn refine_split(x: &[f64], around: usize, l: usize) -> usize {
    let n = x.len();
    let a = around.saturating_sub(2 * l);
    let b = (around + 2 * l).min(n);
    let lo = (a + 2).max(around.saturating_sub(l));
    let hi = (b - 2).min(around + l);
    let sse = |s: &[f64]| {
        let m = stats::mean(s);
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    (lo..=hi)
        .min_by(|&p, &q| (sse(&x[a..p]) + sse(&x[p..b])).total_cmp(&(sse(&x[a..q]) + sse(&x[q..b]))))
        .unwrap_or(around)
}

fn index_set(events: &[Event], length: usize) -> ObsValue {
    let mut indices: Vec<usize> = events
        .iter()
        .flat_map(|e| match e.kind {
            EventKind::LevelShift => e.start..e.start + 1,
            _ => e.start..e.end,
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();
    ObsValue::IndexSet {
        indices,
        events: events.to_vec(),
        length,
    }
}

fn anomaly_classifier(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name")?;
    let threshold = positive_threshold(args)?;
    let w = baseline_window(args, x.len())?;
    let (events, scale) = anomalies(&x, w, threshold);
    Ok(ToolOutput::value(index_set(&events, x.len()))
        .diag("threshold", threshold)
        .diag("window", w)
        .diag("scale", num(scale))
        .diag("length", x.len()))
}

fn spike_detector(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name")?;
    let threshold = positive_threshold(args)?;
    let min_sep = args.opt_count("min_sep")?.unwrap_or(1).max(1);
    let w = baseline_window(args, x.len())?;
    let events = spikes(&x, w, threshold, min_sep);
    Ok(ToolOutput::value(index_set(&events, x.len()))
        .diag("threshold", threshold)
        .diag("min_sep", min_sep)
        .diag("length", x.len()))
}

/// Point-wise detections, thinned so kept points are at least `min_sep` apart.
pub fn spikes(x: &[f64], w: usize, threshold: f64, min_sep: usize) -> Vec<Event> {
    let (z, _) = robust_residual_z(x, w, threshold);
    let mut candidates: Vec<usize> = (0..x.len()).filter(|&t| z[t].abs() > threshold).collect();
    candidates.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for t in candidates {
        if kept.iter().all(|&k| k.abs_diff(t) >= min_sep) {
            kept.push(t);
        }
    }
    kept.sort_unstable();
    kept.into_iter()
        .map(|t| Event {
            start: t,
            end: t + 1,
            kind: if z[t] > 0.0 { EventKind::Spike } else { EventKind::Dip },
            score: z[t],
        })
        .collect()
}

/// Period and strength from the ACF of the detrended series; `None` period
/// when no local maximum exists in `2..=max_period`.
pub fn seasonality(x: &[f64], max_period: usize) -> (Option<usize>, f64) {
    let y = stats::detrend(x);
    let Some(r) = stats::acf(&y, max_period + 1) else {
        return (None, 0.0);
    };
    let best = (2..=max_period)
        .filter(|&k| r[k] > r[k - 1] && r[k] >= r[k + 1])
        .max_by(|&a, &b| r[a].total_cmp(&r[b]).then(b.cmp(&a)));
    match best {
        Some(k) if r[k] > 0.0 => (Some(k), r[k]),
        _ => (None, 0.0),
    }
}

pub fn strength_label(strength: f64) -> &'static str {
    if strength >= SEASONALITY_STRONG {
        "strong"
    } else if strength >= SEASONALITY_WEAK {
        "weak"
    } else {
        "none"
    }
}

fn seasonality_detector(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name")?;
    let n = x.len();
    let max_period = args.opt_count("max_period")?.unwrap_or(n / 2);
    if max_period < 2 {
        return Err(ToolError::new("max_period must be at least 2"));
    }
    if n < 2 * max_period || n < 4 {
        return Err(ToolError::new(format!(
            "max_period {max_period} is too large for {n} points (needs T >= 2 * max_period)"
        )));
    }
    let (period, strength) = seasonality(&x, max_period);
    let label = if period.is_some() {
        strength_label(strength)
    } else {
        "none"
    };
    Ok(ToolOutput::value(category(label))
        .diag("period", period.map_or(Value::Null, Value::from))
        .diag("strength", num(strength))
        .diag("max_period", max_period))
}

/// Prefix sums for O(1) segment cost.
struct Prefix {
    s: Vec<f64>,
    s2: Vec<f64>,
    floor: f64,
}

impl Prefix {
    fn new(x: &[f64]) -> Self {
        let m = stats::mean(x);
        let mut s = vec![0.0];
        let mut s2 = vec![0.0];
        for v in x {
            let c = v - m;
            s.push(s.last().unwrap() + c);
            s2.push(s2.last().unwrap() + c * c);
        }
        let total = s2[x.len()] / x.len() as f64;
        Self {
            s,
            s2,
            floor: (total * 1e-10).max(1e-300),
        }
    }

    /// Gaussian negative log-likelihood (up to constants) of `[a, b)`.
    fn cost(&self, a: usize, b: usize) -> f64 {
        let n = (b - a) as f64;
        let sum = self.s[b] - self.s[a];
        let var = ((self.s2[b] - self.s2[a]) - sum * sum / n) / n;
        n * var.max(self.floor).ln()
    }

    fn best_split(&self, a: usize, b: usize, min_size: usize) -> Option<(usize, f64)> {
        if b - a < 2 * min_size {
            return None;
        }
        let whole = self.cost(a, b);
        (a + min_size..=b - min_size)
            .map(|s| (s, whole - self.cost(a, s) - self.cost(s, b)))
            .max_by(|p, q| p.1.total_cmp(&q.1).then(q.0.cmp(&p.0)))
    }
}

pub fn default_min_size(n: usize) -> usize {
    (n / 20).max(5)
}

pub fn default_penalty(n: usize) -> f64 {
    CHANGE_PENALTY_PER_LOG_T * (n as f64).ln()
}

/// Binary segmentation. With `n_cp` the best splits are taken until that many
/// exist; otherwise splitting stops once the best gain falls below `penalty`.
pub fn change_points(x: &[f64], penalty: f64, n_cp: Option<usize>, min_size: usize) -> Vec<usize> {
    if stats::variance(x) <= 0.0 || x.len() < 2 {
        return Vec::new();
    }
    let pre = Prefix::new(x);
    let mut segments = vec![(0usize, x.len())];
    let mut cps = Vec::new();
    loop {
        if n_cp.is_some_and(|k| cps.len() >= k) {
            break;
        }
        let best = segments
            .iter()
            .enumerate()
            .filter_map(|(i, &(a, b))| pre.best_split(a, b, min_size).map(|(s, g)| (i, s, g)))
            .max_by(|p, q| p.2.total_cmp(&q.2));
        let Some((i, s, gain)) = best else { break };
        let accept = match n_cp {
            Some(_) => gain > 0.0,
            None => gain > penalty,
        };
        if !accept {
            break;
        }
        let (a, b) = segments.remove(i);
        segments.push((a, s));
        segments.push((s, b));
        cps.push(s);
    }
    cps.sort_unstable();
    cps
}

fn change_point_detector(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name")?;
    let n = x.len();
    if n < 10 {
        return Err(ToolError::new(format!(
            "change point detection needs at least 10 points, got {n}"
        )));
    }
    let penalty = args.opt_real("penalty")?;
    let n_cp = args.opt_count("n_cp")?;
    if penalty.is_some() && n_cp.is_some() {
        return Err(ToolError::new("supply either penalty or n_cp, not both"));
    }
    let min_size = args.opt_count("min_size")?.unwrap_or_else(|| default_min_size(n));
    if min_size == 0 {
        return Err(ToolError::new("min_size must be at least 1"));
    }
    let penalty = penalty.unwrap_or_else(|| default_penalty(n));
    let cps = change_points(&x, penalty, n_cp, min_size);
    let events: Vec<Event> = cps
        .iter()
        .enumerate()
        .map(|(k, &c)| Event {
            start: c,
            end: cps.get(k + 1).copied().unwrap_or(n),
            kind: EventKind::LevelShift,
            score: 0.0,
        })
        .collect();
    Ok(ToolOutput::value(ObsValue::IndexSet {
        indices: cps,
        events,
        length: n,
    })
    .diag("penalty", num(penalty))
    .diag("min_size", min_size))
}

/// Lag-1 autocorrelation statistic `r1 * sqrt(n)` and the label.
pub fn noise_label(x: &[f64]) -> Option<(&'static str, f64, f64)> {
    let r1 = stats::autocorrelation(x, 1)?;
    let z = r1 * (x.len() as f64).sqrt();
    let crit = stats::normal_quantile(1.0 - NOISE_ALPHA);
    Some((if z > crit { "red" } else { "white" }, r1, z))
}

fn noise_profile(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let (a, b) = args.window(&s, "window")?;
    let y = &x[a..b];
    if y.len() < 30 {
        return Err(ToolError::new(format!(
            "noise profile needs at least 30 points, got {}",
            y.len()
        )));
    }
    let (label, r1, z) =
        noise_label(y).ok_or_else(|| ToolError::new("noise profile is undefined for a constant series"))?;
    Ok(ToolOutput::value(category(label)).diag("r1", num(r1)).diag("z", num(z)))
}

/// MacKinnon approximate 5% critical value, constant-only regression.
pub fn adf_critical_5pct(n: usize) -> f64 {
    let n = n as f64;
    -2.86154 - 2.8903 / n - 4.234 / (n * n) - 40.040 / (n * n * n)
}

/// ADF t-statistic, lag order and effective sample size.
pub fn adf(y: &[f64]) -> Option<(f64, usize, usize)> {
    let t = y.len();
    let p = ((t - 1) as f64).cbrt().floor() as usize;
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let rows: Vec<usize> = (p + 1..t).collect();
    let n = rows.len();
    let x = DMatrix::from_fn(n, 2 + p, |i, j| {
        let tt = rows[i];
        match j {
            0 => 1.0,
            1 => y[tt - 1],
            k => dy[tt - 1 - (k - 1)],
        }
    });
    let target = DVector::from_iterator(n, rows.iter().map(|&tt| dy[tt - 1]));
    let fit = stats::ols(&x, &target)?;
    if fit.std_err[1] <= 0.0 {
        return None;
    }
    Some((fit.t_stat(1), p, n))
}

pub fn kpss_lags(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize
}

/// KPSS level-stationarity statistic with a Bartlett long-run variance.
pub fn kpss(y: &[f64]) -> Option<(f64, usize)> {
    let t = y.len();
    let m = stats::mean(y);
    let e: Vec<f64> = y.iter().map(|v| v - m).collect();
    let l = kpss_lags(t);
    let tf = t as f64;
    let mut lrv = e.iter().map(|v| v * v).sum::<f64>() / tf;
    for k in 1..=l.min(t - 1) {
        let w = 1.0 - k as f64 / (l as f64 + 1.0);
        let g: f64 = (k..t).map(|i| e[i] * e[i - k]).sum::<f64>() / tf;
        lrv += 2.0 * w * g;
    }
    if lrv <= 0.0 {
        return None;
    }
    let mut s = 0.0;
    let mut acc = 0.0;
    for v in &e {
        s += v;
        acc += s * s;
    }
    Some((acc / (tf * tf * lrv), l))
}

fn stationarity_test(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, y) = args.univariate("name")?;
    if y.len() < 20 {
        return Err(ToolError::new(format!(
            "stationarity test needs at least 20 points, got {}",
            y.len()
        )));
    }
    let test = args.choice_or("test", "adf");
    match test.as_str() {
        "adf" => {
            let (stat, lags, n) = adf(&y)
                .ok_or_else(|| ToolError::new("ADF regression is rank-deficient (constant or degenerate series)"))?;
            let crit = adf_critical_5pct(n);
            let label = if stat < crit { "stationary" } else { "nonstationary" };
            Ok(ToolOutput::value(category(label))
                .diag("test", "adf")
                .diag("statistic", num(stat))
                .diag("critical_value_5pct", crit)
                .diag("lags", lags))
        }
        "kpss" => {
            let (stat, lags) = kpss(&y).ok_or_else(|| ToolError::new("KPSS is undefined for a constant series"))?;
            let label = if stat > KPSS_CRITICAL_5PCT {
                "nonstationary"
            } else {
                "stationary"
            };
            Ok(ToolOutput::value(category(label))
                .diag("test", "kpss")
                .diag("statistic", num(stat))
                .diag("critical_value_5pct", KPSS_CRITICAL_5PCT)
                .diag("lags", lags))
        }
        other => Err(ToolError::new(format!("unsupported test '{other}'; use adf or kpss"))),
    }
}
