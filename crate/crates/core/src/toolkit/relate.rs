//! Relations between two series: correlation, alignment, causality.

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::{
    choice, series_param, spec, Args, Family, ObsValue, OutputKind, ParamSpec, ParamType, ToolError, ToolFn,
    ToolOutput, ToolSpec,
};
use crate::stats;

pub const GRANGER_ALPHA: f64 = 0.05;

pub(super) fn tools() -> Vec<(ToolSpec, ToolFn)> {
    let pair = || vec![series_param("name1"), series_param("name2")];
    let with = |mut v: Vec<ParamSpec>, extra: Vec<ParamSpec>| {
        v.extend(extra);
        v
    };
    vec![
        (
            spec(
                "corr_relation",
                Family::Rel,
                OutputKind::Real,
                "Pearson or Spearman correlation of x[t] with y[t + lag]",
                with(
                    pair(),
                    vec![
                        ParamSpec::with_default("lag", ParamType::Int, json!(0), "lag applied to the second series"),
                        ParamSpec::with_default(
                            "method",
                            choice(&["pearson", "spearman"]),
                            json!("pearson"),
                            "correlation type",
                        ),
                    ],
                ),
            ),
            corr_relation as ToolFn,
        ),
        (
            spec(
                "cross_correlation",
                Family::Rel,
                OutputKind::Relation,
                "Cross-correlation for lags -max_lag..max_lag and the lag of largest magnitude",
                with(
                    pair(),
                    vec![ParamSpec::required("max_lag", ParamType::Count, "largest lag")],
                ),
            ),
            cross_correlation,
        ),
        (
            spec(
                "dtw_distance",
                Family::Rel,
                OutputKind::Real,
                "Dynamic time warping distance (squared pointwise cost, full window); lower is more similar",
                pair(),
            ),
            dtw_distance,
        ),
        (
            spec(
                "shape_similarity",
                Family::Rel,
                OutputKind::Real,
                "Scale-invariant shape score in [-1, 1]: correlation of z-normalized series",
                with(
                    pair(),
                    vec![ParamSpec::with_default(
                        "norm",
                        choice(&["zscore"]),
                        json!("zscore"),
                        "normalization",
                    )],
                ),
            ),
            shape_similarity,
        ),
        (
            spec(
                "granger_causality",
                Family::Rel,
                OutputKind::Relation,
                "F-test of whether name1 Granger-causes name2; returns p-value and decision",
                with(
                    pair(),
                    vec![ParamSpec::required("maxlag", ParamType::Count, "number of lags")],
                ),
            ),
            granger_causality,
        ),
    ]
}

/// Pairs `(x[i], y[i + lag])` over the overlap.
pub fn lagged_pairs(x: &[f64], y: &[f64], lag: i64) -> (Vec<f64>, Vec<f64>) {
    let start = (-lag).max(0);
    let end = (x.len() as i64).min(y.len() as i64 - lag);
    if end <= start {
        return (Vec::new(), Vec::new());
    }
    (start..end).map(|i| (x[i as usize], y[(i + lag) as usize])).unzip()
}

pub fn lagged_corr(x: &[f64], y: &[f64], lag: i64, spearman: bool) -> Result<f64, ToolError> {
    let (a, b) = lagged_pairs(x, y, lag);
    if a.len() < 3 {
        return Err(ToolError::new(format!(
            "only {} overlapping points at lag {lag}; at least 3 are needed",
            a.len()
        )));
    }
    let r = if spearman {
        stats::spearman(&a, &b)
    } else {
        stats::pearson(&a, &b)
    };
    r.ok_or_else(|| ToolError::new("correlation is undefined for a constant input"))
}

fn corr_relation(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name1")?;
    let (_, y) = args.univariate("name2")?;
    let lag = args.int_or("lag", 0);
    let method = args.choice_or("method", "pearson");
    let r = lagged_corr(&x, &y, lag, method == "spearman")?;
    Ok(ToolOutput::value(ObsValue::Real { value: r })
        .diag("lag", lag)
        .diag("method", method))
}

/// Cross-correlation at every lag in `-max_lag..=max_lag`.
pub fn ccf(x: &[f64], y: &[f64], max_lag: usize) -> Result<(Vec<i64>, Vec<f64>), ToolError> {
    let m = max_lag as i64;
    let lags: Vec<i64> = (-m..=m).collect();
    let values = lags
        .iter()
        .map(|&l| lagged_corr(x, y, l, false))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((lags, values))
}

fn cross_correlation(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name1")?;
    let (_, y) = args.univariate("name2")?;
    let max_lag = args.count("max_lag")?;
    let t = x.len().min(y.len());
    if max_lag >= t {
        return Err(ToolError::new(format!(
            "max_lag {max_lag} must be smaller than the series length {t}"
        )));
    }
    let (lags, values) = ccf(&x, &y, max_lag)?;
    let best = (0..lags.len())
        .max_by(|&a, &b| {
            values[a]
                .abs()
                .total_cmp(&values[b].abs())
                .then(lags[b].abs().cmp(&lags[a].abs()))
        })
        .expect("at least lag 0");
    Ok(ToolOutput::value(ObsValue::CrossCorrelation {
        best_lag: lags[best],
        best_value: values[best],
        lags,
        ccf: values,
    }))
}

/// DTW with squared pointwise cost; returns the square root of the optimal
/// accumulated cost.
pub fn dtw(x: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (x.len(), y.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let c = (x[i - 1] - y[j - 1]).powi(2);
            cur[j] = c + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m].sqrt()
}

fn dtw_distance(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name1")?;
    let (_, y) = args.univariate("name2")?;
    Ok(ToolOutput::value(ObsValue::Real { value: dtw(&x, &y) }))
}

fn shape_similarity(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name1")?;
    let (_, y) = args.univariate("name2")?;
    if x.len() != y.len() {
        return Err(ToolError::new(format!(
            "shape similarity needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let constant = || ToolError::new("shape similarity is undefined for a constant input");
    let zx = stats::zscore(&x).ok_or_else(constant)?;
    let zy = stats::zscore(&y).ok_or_else(constant)?;
    let r = stats::pearson(&zx, &zy).ok_or_else(constant)?;
    Ok(ToolOutput::value(ObsValue::Real { value: r }))
}

/// F statistic, p-value and degrees of freedom of the nested-OLS test that
/// lags of `x` improve prediction of `y`.
pub fn granger(x: &[f64], y: &[f64], p: usize) -> Result<(f64, f64, usize, usize), ToolError> {
    let t = x.len().min(y.len());
    let rows: Vec<usize> = (p..t).collect();
    let n = rows.len();
    let target = DVector::from_iterator(n, rows.iter().map(|&r| y[r]));
    let restricted = DMatrix::from_fn(n, 1 + p, |i, j| if j == 0 { 1.0 } else { y[rows[i] - j] });
    let full = DMatrix::from_fn(n, 1 + 2 * p, |i, j| match j {
        0 => 1.0,
        j if j <= p => y[rows[i] - j],
        j => x[rows[i] - (j - p)],
    });
    let deficient = || ToolError::new("rank-deficient regression (constant or collinear inputs)");
    let r = stats::ols(&restricted, &target).ok_or_else(deficient)?;
    let u = stats::ols(&full, &target).ok_or_else(deficient)?;
    let d2 = n - (1 + 2 * p);
    if u.rss <= 0.0 {
        return Err(deficient());
    }
    let f = ((r.rss - u.rss) / p as f64) / (u.rss / d2 as f64);
    Ok((f, stats::f_upper_p(f, p, d2), p, d2))
}

fn granger_causality(args: &Args) -> Result<ToolOutput, ToolError> {
    let (_, x) = args.univariate("name1")?;
    let (_, y) = args.univariate("name2")?;
    let p = args.count("maxlag")?;
    if p == 0 {
        return Err(ToolError::new("maxlag must be at least 1"));
    }
    let t = x.len().min(y.len());
    if t < 10 * p {
        return Err(ToolError::new(format!(
            "granger test with maxlag {p} needs at least {} points, got {t}",
            10 * p
        )));
    }
    let (f, pv, d1, d2) = granger(&x, &y, p)?;
    Ok(ToolOutput::value(ObsValue::Granger {
        p_value: pv,
        f_statistic: f,
        decision: if pv < GRANGER_ALPHA { "yes" } else { "no" }.into(),
        maxlag: p,
    })
    .diag("df_num", d1)
    .diag("df_den", d2))
}
