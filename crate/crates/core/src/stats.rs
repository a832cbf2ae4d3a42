//! Small statistics toolkit shared by the estimators.

use alloc::vec::Vec;
use libm::{erfc, exp, fabs, sqrt};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile (type 7) of `xs`, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted(xs), q)
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

/// Result of a (weighted) least-squares line fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope (NaN with fewer than 3 points).
    pub slope_se: f64,
    pub n: usize,
}

impl LineFit {
    /// Normal-approximation 95% interval for the slope.
    pub fn slope_ci95(&self) -> (f64, f64) {
        (self.slope - 1.96 * self.slope_se, self.slope + 1.96 * self.slope_se)
    }
}

pub fn line_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let w: Vec<f64> = xs.iter().map(|_| 1.0).collect();
    weighted_line_fit(xs, ys, &w)
}

/// Weighted least squares. Returns `None` with fewer than two points or a
/// degenerate design.
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || ws.len() != n {
        return None;
    }
    let sw: f64 = ws.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += ws[i] * dx * dx;
        sxy += ws[i] * dx * dy;
        syy += ws[i] * dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..n)
        .map(|i| {
            let r = ys[i] - intercept - slope * xs[i];
            ws[i] * r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    // Weights are rescaled to mean one so the residual variance estimate is
    // on the scale of an unweighted fit.
    let slope_se = if n > 2 {
        let scale = n as f64 / sw;
        sqrt(sse * scale / (n - 2) as f64 / (sxx * scale))
    } else {
        f64::NAN
    };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
        slope_se,
        n,
    })
}

/// Wilson score interval for a binomial proportion at 95%.
pub fn wilson95(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * sqrt(p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)) / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if successes == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

/// Kolmogorov–Smirnov statistic of `xs` against the standard normal.
pub fn ks_statistic_normal(xs: &[f64]) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = normal_cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max(fabs(f - lo)).max(fabs(hi - f));
    }
    d
}

/// Asymptotic p-value of the one-sample KS statistic `d` at sample size `n`
/// (Stephens' small-sample correction).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = sqrt(n as f64);
    let t = (sn + 0.12 + 0.11 / sn) * d;
    if t < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = exp(-2.0 * kf * kf * t * t);
        p += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = line_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(f.slope_se.abs() < 1e-12);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(median(&v), 2.5);
    }

    #[test]
    fn wilson_brackets_the_estimate() {
        let (lo, hi) = wilson95(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson95(0, 10).0, 0.0);
        assert_eq!(wilson95(10, 10).1, 1.0);
    }

    #[test]
    fn ks_p_value_limits() {
        assert!(ks_p_value(0.001, 1000) > 0.99);
        assert!(ks_p_value(0.2, 1000) < 1e-10);
        // Critical value at 5% is about 1.36 / sqrt(n).
        let p = ks_p_value(1.358 / (1000f64).sqrt(), 1000);
        assert!((p - 0.05).abs() < 0.01, "{p}");
    }
}
