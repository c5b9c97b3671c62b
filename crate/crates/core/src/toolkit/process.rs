//! Data processing tools: every output is a new derived series.

use serde_json::{json, Value};

use super::{
    choice, series_param, spec, Args, DerivedPiece, Family, OutputKind, ParamSpec, ParamType, ToolError, ToolFn,
    ToolOutput, ToolSpec,
};
use crate::series::TimeSeries;
use crate::stats;

pub(super) fn tools() -> Vec<(ToolSpec, ToolFn)> {
    let proc = |name, desc, params| spec(name, Family::Proc, OutputKind::Series, desc, params);
    vec![
        (
            proc(
                "slice_series",
                "Extract the window [start, end) of a series by position or timestamp",
                vec![
                    series_param("name"),
                    ParamSpec::required("start", ParamType::Locator, "first position or timestamp (inclusive)"),
                    ParamSpec::required("end", ParamType::Locator, "end position or timestamp (exclusive)"),
                ],
            ),
            slice_series as ToolFn,
        ),
        (
            proc(
                "segment_series",
                "Partition a series into k equal segments (last absorbs the remainder) or into given lengths",
                vec![
                    series_param("name"),
                    ParamSpec::optional("k", ParamType::Count, "number of equal segments"),
                    ParamSpec::optional("lengths", ParamType::CountList, "explicit segment lengths summing to T"),
                ],
            ),
            segment_series,
        ),
        (
            proc(
                "resample_series",
                "Downsample to a coarser interval, aggregating each bucket",
                vec![
                    series_param("name"),
                    ParamSpec::required(
                        "interval",
                        ParamType::Real,
                        "target interval, a multiple of the source interval",
                    ),
                    ParamSpec::with_default(
                        "method",
                        choice(&["mean", "sum", "last"]),
                        json!("mean"),
                        "bucket aggregation",
                    ),
                ],
            ),
            resample_series,
        ),
        (
            proc(
                "select_channel",
                "Extract one channel of a multivariate series as a univariate series",
                vec![
                    series_param("name"),
                    ParamSpec::required("channel", ParamType::Channel, "channel name or position"),
                ],
            ),
            select_channel,
        ),
        (
            proc(
                "normalize_series",
                "Normalize values by z-score or min-max, globally or against a reference window",
                vec![
                    series_param("name"),
                    ParamSpec::with_default(
                        "method",
                        choice(&["zscore", "minmax"]),
                        json!("zscore"),
                        "normalization",
                    ),
                    ParamSpec::optional("ref_window", ParamType::Range, "reference window [start, end)"),
                ],
            ),
            normalize_series,
        ),
    ]
}

fn slice_series(args: &Args) -> Result<ToolOutput, ToolError> {
    let s = args.series("name")?;
    let start = args.bound(&s, "start")?;
    let end = args.bound(&s, "end")?;
    if start >= end {
        return Err(ToolError::new(format!(
            "empty result window [{start}, {end}); start must be before end"
        )));
    }
    let piece = DerivedPiece {
        series: s.window(start, end)?,
        window: (start, end),
    };
    Ok(ToolOutput::derived("slice", s, vec![piece]))
}

/// Segment lengths for `k` equal parts of `t` points, last absorbing the remainder.
pub(crate) fn equal_lengths(t: usize, k: usize) -> Vec<usize> {
    let base = t / k;
    let mut lengths = vec![base; k];
    lengths[k - 1] += t - base * k;
    lengths
}

fn segment_series(args: &Args) -> Result<ToolOutput, ToolError> {
    let s = args.series("name")?;
    let t = s.len();
    let lengths = match (args.opt_count("k")?, args.counts("lengths")) {
        (Some(_), Some(_)) => {
            return Err(ToolError::new("supply either k or lengths, not both"));
        }
        (None, None) => return Err(ToolError::new("missing required parameter 'k' (or 'lengths')")),
        (Some(k), None) => {
            if k == 0 || k > t {
                return Err(ToolError::new(format!(
                    "k must be between 1 and the series length {t}, got {k}"
                )));
            }
            equal_lengths(t, k)
        }
        (None, Some(lengths)) => {
            let total: usize = lengths.iter().sum();
            if total != t || lengths.contains(&0) {
                return Err(ToolError::new(format!(
                    "lengths must be positive and sum to the series length {t}, got sum {total}"
                )));
            }
            lengths
        }
    };
    let mut pieces = Vec::with_capacity(lengths.len());
    let mut start = 0;
    for len in lengths {
        pieces.push(DerivedPiece {
            series: s.window(start, start + len)?,
            window: (start, start + len),
        });
        start += len;
    }
    Ok(ToolOutput::derived("segment", s, pieces))
}

fn aggregate(bucket: &[f64], method: &str) -> f64 {
    let finite: Vec<f64> = bucket.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return f64::NAN;
    }
    match method {
        "sum" => finite.iter().sum(),
        "last" => *finite.last().expect("non-empty"),
        _ => stats::mean(&finite),
    }
}

fn resample_series(args: &Args) -> Result<ToolOutput, ToolError> {
    let s = args.series("name")?;
    let target = args.real("interval")?;
    let method = args.choice_or("method", "mean");
    if target <= 0.0 {
        return Err(ToolError::new("interval must be positive"));
    }
    let source = match s.interval() {
        Some(i) => i,
        None if s.len() == 1 => 1.0,
        None => return Err(ToolError::new("resampling needs a constant source sampling interval")),
    };
    let ratio = target / source;
    let factor = ratio.round();
    if ratio < 1.0 - 1e-9 {
        return Err(ToolError::new(format!(
            "upsampling is not supported: interval {target} is finer than the source interval {source}"
        )));
    }
    if (ratio - factor).abs() > 1e-9 * ratio.max(1.0) {
        return Err(ToolError::new(format!(
            "interval {target} is not a whole multiple of the source interval {source}"
        )));
    }
    let factor = factor as usize;
    let index: Vec<f64> = s.index().iter().step_by(factor).copied().collect();
    let values: Vec<Vec<f64>> = s
        .values()
        .iter()
        .map(|row| row.chunks(factor).map(|b| aggregate(b, &method)).collect())
        .collect();
    let out = TimeSeries::new(s.name(), s.channels().to_vec(), index, values)?;
    let window = (0, s.len());
    Ok(ToolOutput::derived("resample", s, vec![DerivedPiece { series: out, window }]).diag("factor", factor))
}

fn select_channel(args: &Args) -> Result<ToolOutput, ToolError> {
    let s = args.series("name")?;
    let c = match args.raw("channel") {
        Some(Value::Number(n)) => {
            let c = n.as_u64().unwrap_or(u64::MAX) as usize;
            if c >= s.dim() {
                return Err(ToolError::new(format!(
                    "unknown channel {c} in series '{}'; channels: [{}]",
                    s.name(),
                    s.channels().join(", ")
                )));
            }
            c
        }
        Some(Value::String(name)) => match s.channel_position(name) {
            Ok(c) => c,
            Err(e) => match name.parse::<usize>() {
                Ok(c) if c < s.dim() => c,
                _ => return Err(e.into()),
            },
        },
        _ => return Err(ToolError::new("missing required parameter 'channel'")),
    };
    let out = TimeSeries::new(
        s.name(),
        vec![s.channels()[c].clone()],
        s.index().to_vec(),
        vec![s.channel(c).to_vec()],
    )?;
    let window = (0, s.len());
    let channel = s.channels()[c].clone();
    Ok(ToolOutput::derived("select", s, vec![DerivedPiece { series: out, window }]).diag("channel", channel))
}

fn normalize_series(args: &Args) -> Result<ToolOutput, ToolError> {
    let s = args.series("name")?;
    let method = args.choice_or("method", "zscore");
    let (a, b) = args.window(&s, "ref_window")?;
    let mut rows = Vec::with_capacity(s.dim());
    for (c, row) in s.values().iter().enumerate() {
        let reference: Vec<f64> = row[a..b].iter().copied().filter(|v| v.is_finite()).collect();
        let constant = || {
            ToolError::new(format!(
                "cannot {method}-normalize channel '{}': reference values are constant",
                s.channels()[c]
            ))
        };
        let (shift, scale) = if method == "minmax" {
            if reference.is_empty() {
                return Err(constant());
            }
            let (lo, hi) = (stats::min(&reference), stats::max(&reference));
            if hi <= lo {
                return Err(constant());
            }
            (lo, hi - lo)
        } else {
            if reference.len() < 2 {
                return Err(constant());
            }
            let sd = stats::std_dev(&reference);
            if sd <= 0.0 {
                return Err(constant());
            }
            (stats::mean(&reference), sd)
        };
        rows.push(row.iter().map(|v| (v - shift) / scale).collect());
    }
    let out = TimeSeries::new(s.name(), s.channels().to_vec(), s.index().to_vec(), rows)?;
    let window = (0, s.len());
    Ok(ToolOutput::derived(
        "normalize",
        s,
        vec![DerivedPiece { series: out, window }],
    ))
}
