//! Numerical operations: point values, windowed statistics, rolling series.

use serde_json::json;

use super::{
    choice, series_param, spec, Args, DerivedPiece, Family, ObsValue, OutputKind, ParamSpec, ParamType, ToolError,
    ToolFn, ToolOutput, ToolSpec,
};
use crate::series::TimeSeries;
use crate::stats;

pub(super) fn tools() -> Vec<(ToolSpec, ToolFn)> {
    let real = |name, desc, params| spec(name, Family::Num, OutputKind::Real, desc, params);
    let series = |name, desc, params| spec(name, Family::Num, OutputKind::Series, desc, params);
    vec![
        (
            spec(
                "series_info",
                Family::Num,
                OutputKind::Meta,
                "Metadata: length, dimension, channel names, sampling interval, missing counts",
                vec![series_param("name")],
            ),
            series_info as ToolFn,
        ),
        (
            real(
                "datapoint_value",
                "Value at one position or timestamp",
                vec![
                    series_param("name"),
                    ParamSpec::required("at", ParamType::Locator, "position or timestamp"),
                ],
            ),
            datapoint_value,
        ),
        (
            real(
                "datarange_value",
                "Mean, sum, max or min over the window [start, end)",
                vec![
                    series_param("name"),
                    ParamSpec::required("start", ParamType::Locator, "window start (inclusive)"),
                    ParamSpec::required("end", ParamType::Locator, "window end (exclusive)"),
                    ParamSpec::with_default(
                        "stat",
                        choice(&["mean", "sum", "max", "min"]),
                        json!("mean"),
                        "statistic",
                    ),
                ],
            ),
            datarange_value,
        ),
        (
            real(
                "summary_stats",
                "Mean, std, min and max, optionally over a window",
                vec![
                    series_param("name"),
                    ParamSpec::optional("range", ParamType::Range, "window [start, end)"),
                ],
            ),
            summary_stats,
        ),
        (
            real(
                "return_calc",
                "Percentage or simple return between two times",
                vec![
                    series_param("name"),
                    ParamSpec::required("t1", ParamType::Locator, "base position or timestamp"),
                    ParamSpec::required("t2", ParamType::Locator, "end position or timestamp"),
                    ParamSpec::with_default("kind", choice(&["pct", "diff"]), json!("pct"), "return type"),
                ],
            ),
            return_calc,
        ),
        (
            real(
                "autocorr",
                "Autocorrelation at a given lag",
                vec![
                    series_param("name"),
                    ParamSpec::required("lag", ParamType::Count, "lag"),
                ],
            ),
            autocorr,
        ),
        (
            series(
                "rolling_stat",
                "Rolling mean, std or quantile; each value is indexed at its window end",
                vec![
                    series_param("name"),
                    ParamSpec::required("stat", choice(&["mean", "std", "quantile"]), "statistic"),
                    ParamSpec::required("window", ParamType::Count, "window length"),
                    ParamSpec::with_default("step", ParamType::Count, json!(1), "stride between windows"),
                    ParamSpec::with_default("q", ParamType::Real, json!(0.5), "quantile level for stat=quantile"),
                ],
            ),
            rolling_stat,
        ),
        (
            real(
                "quantile_value",
                "Empirical quantile (linear interpolation) at level q in (0, 1)",
                vec![
                    series_param("name"),
                    ParamSpec::required("q", ParamType::Real, "quantile level"),
                ],
            ),
            quantile_value,
        ),
        (
            series(
                "volatility",
                "Rolling std of first differences",
                vec![
                    series_param("name"),
                    ParamSpec::required("window", ParamType::Count, "window length over differences"),
                ],
            ),
            volatility,
        ),
    ]
}

fn real(v: f64) -> ObsValue {
    ObsValue::Real { value: v }
}

fn series_info(args: &Args) -> Result<ToolOutput, ToolError> {
    let s = args.series("name")?;
    Ok(ToolOutput::value(ObsValue::Meta { meta: s.meta() }))
}

fn datapoint_value(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let i = args.point(&s, "at")?;
    Ok(ToolOutput::value(real(x[i]))
        .diag("position", i)
        .diag("timestamp", s.index()[i]))
}

fn window_of(args: &Args, s: &TimeSeries) -> Result<(usize, usize), ToolError> {
    let start = args.bound(s, "start")?;
    let end = args.bound(s, "end")?;
    if start >= end {
        return Err(ToolError::new(format!("empty window [{start}, {end})")));
    }
    Ok((start, end))
}

fn datarange_value(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let (a, b) = window_of(args, &s)?;
    let stat = args.choice_or("stat", "mean");
    let w = &x[a..b];
    let v = match stat.as_str() {
        "sum" => w.iter().sum(),
        "max" => stats::max(w),
        "min" => stats::min(w),
        _ => stats::mean(w),
    };
    Ok(ToolOutput::value(real(v)).diag("window", json!([a, b])))
}

fn summary_stats(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let (a, b) = args.window(&s, "range")?;
    let w = &x[a..b];
    if w.len() < 2 {
        return Err(ToolError::new("std requires at least 2 points; the window has 1"));
    }
    Ok(ToolOutput::value(ObsValue::Stats {
        mean: stats::mean(w),
        std: stats::std_dev(w),
        min: stats::min(w),
        max: stats::max(w),
        n: w.len(),
    })
    .diag("window", json!([a, b])))
}

fn return_calc(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let i = args.point(&s, "t1")?;
    let j = args.point(&s, "t2")?;
    let kind = args.choice_or("kind", "pct");
    let v = if kind == "diff" {
        x[j] - x[i]
    } else {
        if x[i] == 0.0 {
            return Err(ToolError::new("percentage return is undefined for a zero base value"));
        }
        (x[j] - x[i]) / x[i]
    };
    Ok(ToolOutput::value(real(v)).diag("positions", json!([i, j])))
}

fn autocorr(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name")?;
    let lag = args.count("lag")?;
    if lag >= x.len() {
        return Err(ToolError::new(format!(
            "lag {lag} must be smaller than the series length {}",
            x.len()
        )));
    }
    let r = stats::autocorrelation(&x, lag)
        .ok_or_else(|| ToolError::new("autocorrelation is undefined for a constant series"))?;
    Ok(ToolOutput::value(real(r)))
}

/// Windows `[e - window, e)` for `e = window, window + step, ...`.
pub fn rolling(x: &[f64], window: usize, step: usize, f: impl Fn(&[f64]) -> f64) -> Vec<(usize, f64)> {
    (window..=x.len())
        .step_by(step)
        .map(|e| (e - 1, f(&x[e - window..e])))
        .collect()
}

fn rolling_series(s: &TimeSeries, points: Vec<(usize, f64)>) -> Result<(TimeSeries, (usize, usize)), ToolError> {
    let first = points.first().map_or(0, |p| p.0);
    let last = points.last().map_or(0, |p| p.0);
    let index = points.iter().map(|(i, _)| s.index()[*i]).collect();
    let values = vec![points.into_iter().map(|(_, v)| v).collect()];
    let out = TimeSeries::new(s.name(), vec![s.channels()[0].clone()], index, values)?;
    Ok((out, (first, last + 1)))
}

fn rolling_stat(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let window = args.count("window")?;
    let step = args.opt_count("step")?.unwrap_or(1);
    let stat = args.choice_or("stat", "mean");
    if window == 0 {
        return Err(ToolError::new("window must be at least 1"));
    }
    if window > x.len() {
        return Err(ToolError::new(format!(
            "window {window} is longer than the series ({} points)",
            x.len()
        )));
    }
    if step == 0 {
        return Err(ToolError::new("step must be at least 1"));
    }
    let points = match stat.as_str() {
        "std" => {
            if window < 2 {
                return Err(ToolError::new("rolling std needs a window of at least 2"));
            }
            rolling(&x, window, step, stats::std_dev)
        }
        "quantile" => {
            let q = args.opt_real("q")?.unwrap_or(0.5);
            if !(0.0..=1.0).contains(&q) {
                return Err(ToolError::new(format!("q must lie in [0, 1], got {q}")));
            }
            rolling(&x, window, step, |w| stats::quantile(w, q))
        }
        _ => rolling(&x, window, step, stats::mean),
    };
    let (out, win) = rolling_series(&s, points)?;
    Ok(ToolOutput::derived(
        "rolling",
        s,
        vec![DerivedPiece {
            series: out,
            window: win,
        }],
    ))
}

fn quantile_value(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name")?;
    let q = args.real("q")?;
    if !(q > 0.0 && q < 1.0) {
        return Err(ToolError::new(format!("q must lie strictly inside (0, 1), got {q}")));
    }
    Ok(ToolOutput::value(real(stats::quantile(&x, q))))
}

/// Rolling std of first differences; value `k` covers differences ending at
/// position `k + window`.
pub fn volatility_values(x: &[f64], window: usize) -> Vec<(usize, f64)> {
    let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    rolling(&diffs, window, 1, stats::std_dev)
        .into_iter()
        .map(|(i, v)| (i + 1, v))
        .collect()
}

fn volatility(args: &Args) -> Result<ToolOutput, ToolError> {
    let (s, x) = args.univariate("name")?;
    let window = args.count("window")?;
    if window < 2 {
        return Err(ToolError::new("volatility window must be at least 2"));
    }
    if window >= x.len() {
        return Err(ToolError::new(format!(
            "window {window} is longer than the {} available differences",
            x.len() - 1
        )));
    }
    let (out, win) = rolling_series(&s, volatility_values(&x, window))?;
    Ok(ToolOutput::derived(
        "volatility",
        s,
        vec![DerivedPiece {
            series: out,
            window: win,
        }],
    ))
}
