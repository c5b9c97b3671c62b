//! Numeric kernels shared by the tools: moments, quantiles, correlation,
//! least squares and reference distributions.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn min(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation empirical quantile on a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted(x), q)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Median absolute deviation about the median (unscaled).
pub fn mad(x: &[f64]) -> f64 {
    let m = median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// Gaussian-consistent robust scale: `1.4826 * MAD`, falling back to
/// `1.2533 * mean absolute deviation` when more than half the values tie.
pub fn robust_scale(x: &[f64]) -> f64 {
    let s = 1.4826 * mad(x);
    if s > 0.0 {
        return s;
    }
    let m = median(x);
    1.2533 * x.iter().map(|v| (v - m).abs()).sum::<f64>() / x.len() as f64
}

/// Sample autocorrelation at `lag` (biased, full-sample denominator).
/// Returns `None` for a constant series.
pub fn autocorrelation(x: &[f64], lag: usize) -> Option<f64> {
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if denom <= 0.0 {
        return None;
    }
    let num: f64 = (0..x.len() - lag).map(|t| (x[t] - m) * (x[t + lag] - m)).sum();
    Some(num / denom)
}

/// Autocorrelation at lags `0..=max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let m = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom <= 0.0 {
        return None;
    }
    Some(
        (0..=max_lag)
            .map(|k| {
                dev[..dev.len() - k]
                    .iter()
                    .zip(&dev[k..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / denom
            })
            .collect(),
    )
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

pub fn zscore(x: &[f64]) -> Option<Vec<f64>> {
    let m = mean(x);
    let s = std_dev(x);
    (s > 0.0).then(|| x.iter().map(|v| (v - m) / s).collect())
}

/// Ordinary least squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub std_err: Vec<f64>,
    pub rss: f64,
    pub dof: usize,
}

impl OlsFit {
    pub fn t_stat(&self, j: usize) -> f64 {
        self.coef[j] / self.std_err[j]
    }
}

/// Least squares of `y` on the columns of `x` (rows are observations).
/// Returns `None` when the design is rank deficient or has no residual
/// degrees of freedom.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<OlsFit> {
    let (n, p) = x.shape();
    if n <= p {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    if (0..p).any(|j| r[(j, j)].abs() <= 1e-10 * scale.max(1.0)) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    let coef = r.solve_upper_triangular(&qty)?;
    let resid = y - x * &coef;
    let rss = resid.norm_squared();
    let dof = n - p;
    let sigma2 = rss / dof as f64;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p))?;
    let cov_diag: Vec<f64> = (0..p).map(|j| r_inv.row(j).norm_squared() * sigma2).collect();
    Some(OlsFit {
        coef: coef.iter().copied().collect(),
        std_err: cov_diag.iter().map(|v| v.sqrt()).collect(),
        rss,
        dof,
    })
}

/// Slope/intercept regression of `y` on `0..n`.
pub fn linear_trend(y: &[f64]) -> Option<OlsFit> {
    let n = y.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    ols(&x, &DVector::from_column_slice(y))
}

/// Residuals from a linear trend; a constant input yields zeros.
pub fn detrend(y: &[f64]) -> Vec<f64> {
    match linear_trend(y) {
        Some(fit) => y
            .iter()
            .enumerate()
            .map(|(i, v)| v - fit.coef[0] - fit.coef[1] * i as f64)
            .collect(),
        None => vec![0.0; y.len()],
    }
}

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: usize) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive dof");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Upper-tail p-value of an F statistic.
pub fn f_upper_p(f: f64, d1: usize, d2: usize) -> f64 {
    if !f.is_finite() {
        return 0.0;
    }
    let dist = FisherSnedecor::new(d1 as f64, d2 as f64).expect("positive dof");
    (1.0 - dist.cdf(f.max(0.0))).clamp(0.0, 1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.25), 1.75);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn ols_recovers_line() {
        let y: Vec<f64> = (0..20).map(|i| 3.0 + 0.5 * i as f64).collect();
        let fit = linear_trend(&y).unwrap();
        assert_relative_eq!(fit.coef[0], 3.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coef[1], 0.5, epsilon = 1e-10);
        assert!(fit.rss < 1e-18);
    }

    #[test]
    fn ols_rank_deficient() {
        let x = DMatrix::from_fn(10, 2, |_, _| 1.0);
        let y = DVector::from_element(10, 2.0);
        assert!(ols(&x, &y).is_none());
    }

    #[test]
    fn robust_scale_fallback() {
        let x = [0.0, 0.0, 0.0, 0.0, 4.0];
        assert_eq!(mad(&x), 0.0);
        assert!(robust_scale(&x) > 0.0);
    }

    #[test]
    fn reference_distributions() {
        assert_relative_eq!(normal_quantile(0.975), 1.959964, epsilon = 1e-5);
        assert_relative_eq!(t_two_sided_p(2.228139, 10), 0.05, epsilon = 1e-5);
        assert_relative_eq!(f_upper_p(3.325835, 2, 10), 0.0775, epsilon = 1e-3);
    }
}
