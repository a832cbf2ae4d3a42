//! Monte Carlo estimators: exponential moments, tail curves and
//! concentration fits.
//!
//! Trials are addressed by index. An [`Executor`] maps a trial range to
//! values in index order; every reduction then runs sequentially over that
//! vector, so results do not depend on the schedule or on the batch size.

use alloc::vec::Vec;
use libm::{exp, log, sqrt};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::functionals::{shifted_drift_difference, sup_distance, Perturbation};
use crate::paths::{sample_path, BrownianPath};
use crate::rng::{tag, KeyedStream};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub n_trials: u64,
    pub base_seed: u64,
    pub level: u32,
    pub batch: u64,
}

impl TrialPlan {
    pub fn new(n_trials: u64, base_seed: u64, level: u32) -> Self {
        Self {
            n_trials,
            base_seed,
            level,
            batch: 4096,
        }
    }

    pub fn with_batch(mut self, batch: u64) -> Self {
        self.batch = batch;
        self
    }

    /// The Brownian path of trial `trial`.
    pub fn path(&self, trial: u64, dim: usize, horizon: f64) -> Result<BrownianPath> {
        sample_path(self.level, dim, horizon, self.base_seed, trial)
    }

    fn check(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Precondition("n_trials must be >= 1".into()));
        }
        Ok(())
    }
}

/// Maps trial indices `start..end` to values, returned in index order.
pub trait Executor: Sync {
    fn map_range<T, F>(&self, start: u64, end: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_range<T, F>(&self, start: u64, end: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (start..end).map(f).collect()
    }
}

/// Runs `f` over every trial of `plan`, batch by batch.
pub fn run_trials<E, T, F>(exec: &E, plan: &TrialPlan, f: F) -> Result<Vec<T>>
where
    E: Executor,
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    plan.check()?;
    let batch = plan.batch.max(1);
    let mut out = Vec::with_capacity(plan.n_trials as usize);
    let mut start = 0;
    while start < plan.n_trials {
        let end = (start + batch).min(plan.n_trials);
        for r in exec.map_range(start, end, &f) {
            out.push(r?);
        }
        start = end;
    }
    Ok(out)
}

/// Largest tolerated fraction of non-finite trials.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;
/// Fraction removed from the top for the trimmed estimate.
pub const TRIM_FRACTION: f64 = 1e-4;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentEstimate {
    pub alpha: f64,
    /// Sample mean of `exp(α F²)`.
    pub estimate: f64,
    /// Percentile bootstrap 95% interval.
    pub ci: (f64, f64),
    pub bootstrap_se: f64,
    pub max_sample: f64,
    /// Mean with the largest `⌊n · 10⁻⁴⌋` samples removed.
    pub trimmed: f64,
    pub n_used: u64,
    pub n_flagged: u64,
    /// Mean and variance of `F` itself.
    pub functional_mean: f64,
    pub functional_var: f64,
}

impl ExpMomentEstimate {
    pub fn trimmed_ratio(&self) -> f64 {
        self.trimmed / self.estimate
    }
}

/// Splits finite values from flagged ones, failing above
/// [`MAX_FLAGGED_FRACTION`].
fn finite_only(values: Vec<f64>) -> Result<(Vec<f64>, u64)> {
    let total = values.len() as u64;
    let kept: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
    let flagged = total - kept.len() as u64;
    if flagged as f64 > MAX_FLAGGED_FRACTION * total as f64 {
        return Err(Error::NonFinite { flagged, total });
    }
    if kept.is_empty() {
        return Err(Error::NonFinite { flagged, total });
    }
    Ok((kept, flagged))
}

/// Exponential moment from precomputed functional values (in trial order).
pub fn exp_moment_from_values(values: Vec<f64>, alpha: f64, base_seed: u64) -> Result<ExpMomentEstimate> {
    if !(alpha >= 0.0) {
        return Err(Error::Precondition(alloc::format!("alpha must be >= 0, got {alpha}")));
    }
    let (f, flagged) = finite_only(values)?;
    let samples: Vec<f64> = f.iter().map(|v| exp(alpha * v * v)).collect();
    let (samples, extra_flagged) = {
        let before = samples.len();
        let s: Vec<f64> = samples.into_iter().filter(|v| v.is_finite()).collect();
        let dropped = (before - s.len()) as u64;
        (s, dropped)
    };
    let n_flagged = flagged + extra_flagged;
    let total = samples.len() as u64 + n_flagged;
    if n_flagged as f64 > MAX_FLAGGED_FRACTION * total as f64 {
        return Err(Error::NonFinite {
            flagged: n_flagged,
            total,
        });
    }
    let n = samples.len();
    let estimate = stats::mean(&samples);
    let max_sample = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = (n as f64 * TRIM_FRACTION) as usize;
    let trimmed = stats::mean(&sorted[..n - cut]);

    let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for b in 0..BOOTSTRAP_RESAMPLES {
        let mut rng = KeyedStream::from_words(&[tag::BOOTSTRAP, base_seed, b as u64]);
        let mut acc = 0.0;
        for _ in 0..n {
            acc += samples[rng.below(n as u64) as usize];
        }
        boots.push(acc / n as f64);
    }
    let bootstrap_se = sqrt(stats::variance(&boots));
    boots.sort_by(f64::total_cmp);
    let ci = (
        stats::quantile_sorted(&boots, 0.025),
        stats::quantile_sorted(&boots, 0.975),
    );
    Ok(ExpMomentEstimate {
        alpha,
        estimate,
        ci,
        bootstrap_se,
        max_sample,
        trimmed,
        n_used: n as u64,
        n_flagged,
        functional_mean: stats::mean(&f),
        functional_var: stats::variance(&f),
    })
}

/// Estimates `E exp(α F²)` where `functional(trial)` is `F` on trial
/// `trial`.
pub fn estimate_exp_moment<E, F>(exec: &E, functional: F, alpha: f64, plan: &TrialPlan) -> Result<ExpMomentEstimate>
where
    E: Executor,
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    if !(alpha >= 0.0) {
        return Err(Error::Precondition(alloc::format!("alpha must be >= 0, got {alpha}")));
    }
    let values = run_trials(exec, plan, functional)?;
    exp_moment_from_values(values, alpha, plan.base_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub lambdas: Vec<f64>,
    pub probs: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub exceedances: Vec<u64>,
    pub n: u64,
    /// `l^{1/2} ‖h₁ - h₂‖_∞`.
    pub normalizer: f64,
}

/// Exceedance curve of `stats` (already normalised) over `lambdas`, counting
/// `stat > λ` strictly.
pub fn tail_from_statistics(stats_values: &[f64], lambdas: &[f64], normalizer: f64) -> Result<TailEstimate> {
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Precondition("lambda grid must be sorted ascending".into()));
    }
    let mut sorted = stats_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as u64;
    let mut probs = Vec::with_capacity(lambdas.len());
    let mut lo = Vec::with_capacity(lambdas.len());
    let mut hi = Vec::with_capacity(lambdas.len());
    let mut counts = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let below = sorted.partition_point(|v| *v <= lam);
        let k = n - below as u64;
        let (a, b) = stats::wilson95(k, n);
        probs.push(k as f64 / n as f64);
        lo.push(a);
        hi.push(b);
        counts.push(k);
    }
    Ok(TailEstimate {
        lambdas: lambdas.to_vec(),
        probs,
        ci_low: lo,
        ci_high: hi,
        exceedances: counts,
        n,
        normalizer,
    })
}

/// Tail curve of `|φ(h₁, W) - φ(h₂, W)| / (l^{1/2} ‖h₁ - h₂‖_∞)` with `h₁`,
/// `h₂` evaluated on the same path (first coordinate of `φ`).
pub fn tail_curve<E, P, Q>(
    exec: &E,
    spec: &DriftSpec,
    h1: &P,
    h2: &Q,
    lambdas: &[f64],
    plan: &TrialPlan,
) -> Result<TailEstimate>
where
    E: Executor,
    P: Perturbation + Sync + ?Sized,
    Q: Perturbation + Sync + ?Sized,
{
    let normalizer = sqrt(h1.window().len()) * sup_distance(h1, h2, spec.dim);
    if !(normalizer > 0.0) {
        return Err(Error::DegenerateNormalizer);
    }
    let values = run_trials(exec, plan, |trial| {
        let path = plan.path(trial, spec.dim, spec.horizon)?;
        Ok(shifted_drift_difference(spec, &path, h1, h2)?.abs() / normalizer)
    })?;
    tail_from_statistics(&values, lambdas, normalizer)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
    pub alpha_se: f64,
    /// `(λ_min, λ_max)` of the bins used.
    pub support: (f64, f64),
    pub bins: usize,
    /// `false` when no decay in `λ²` is detected.
    pub decaying: bool,
}

/// Minimum exceedance count for a bin to enter the fit.
pub const MIN_EXCEEDANCES: u64 = 10;
pub const MIN_BINS: usize = 4;

/// Weighted least squares of `log p` against `λ²`, weights `n p / (1 - p)`
/// (the inverse delta-method variance of `log p̂`).
pub fn fit_concentration(tail: &TailEstimate) -> Result<ConcentrationFit> {
    let n = tail.n as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for i in 0..tail.lambdas.len() {
        let p = tail.probs[i];
        if tail.exceedances[i] < MIN_EXCEEDANCES || !(p > 0.0) {
            continue;
        }
        let lam = tail.lambdas[i];
        xs.push(lam * lam);
        ys.push(log(p));
        ws.push(n * p / (1.0 - p).max(1.0 / n));
    }
    if xs.len() < MIN_BINS {
        return Err(Error::FitUnsupported {
            supported: xs.len(),
            needed: MIN_BINS,
        });
    }
    let fit = stats::weighted_line_fit(&xs, &ys, &ws).ok_or(Error::FitUnsupported {
        supported: xs.len(),
        needed: MIN_BINS,
    })?;
    let alpha_hat = -fit.slope;
    let lo = sqrt(xs.iter().copied().fold(f64::INFINITY, f64::min));
    let hi = sqrt(xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    Ok(ConcentrationFit {
        alpha_hat,
        c_hat: exp(fit.intercept),
        r_squared: fit.r_squared,
        alpha_se: fit.slope_se,
        support: (lo, hi),
        bins: xs.len(),
        decaying: alpha_hat > 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{derivative_integral, ConstantShift};
    use crate::paths::TimeWindow;
    use crate::rng::normal_at;
    use alloc::vec;
    use proptest::prelude::*;

    fn synthetic_tail(alpha: f64, lambdas: &[f64]) -> TailEstimate {
        let n = 1_000_000_000u64;
        let probs: Vec<f64> = lambdas.iter().map(|l| (-alpha * l * l).exp()).collect();
        TailEstimate {
            lambdas: lambdas.to_vec(),
            exceedances: probs.iter().map(|p| (p * n as f64) as u64).collect(),
            ci_low: probs.clone(),
            ci_high: probs.clone(),
            probs,
            n,
            normalizer: 1.0,
        }
    }

    #[test]
    fn zero_functional_and_zero_alpha_give_one() {
        let plan = TrialPlan::new(1000, 7, 6);
        let e = estimate_exp_moment(&Sequential, |_| Ok(0.0), 0.1, &plan).unwrap();
        assert_eq!(e.estimate, 1.0);
        let e = estimate_exp_moment(&Sequential, |t| Ok(normal_at(&[1, t])), 0.0, &plan).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.trimmed, 1.0);
    }

    #[test]
    fn gaussian_exp_moment_matches_closed_form() {
        let plan = TrialPlan::new(100_000, 3, 0);
        let e = estimate_exp_moment(&Sequential, |t| Ok(normal_at(&[tag::SYNTH, 3, t])), 0.1, &plan).unwrap();
        let exact = 1.0 / (1.0f64 - 0.2).sqrt();
        assert!(e.ci.0 < exact && exact < e.ci.1, "{:?} {exact}", e.ci);
        assert!((e.estimate - exact).abs() < 4.0 * e.bootstrap_se);
    }

    #[test]
    fn non_finite_trials_are_flagged() {
        let plan = TrialPlan::new(10_000, 1, 0);
        let e = estimate_exp_moment(&Sequential, |t| Ok(if t == 5 { f64::NAN } else { 0.5 }), 0.1, &plan).unwrap();
        assert_eq!(e.n_flagged, 1);
        assert_eq!(e.n_used, 9_999);
        let r = estimate_exp_moment(&Sequential, |t| Ok(if t % 100 == 0 { f64::INFINITY } else { 0.5 }), 0.1, &plan);
        assert!(matches!(r, Err(Error::NonFinite { flagged: 100, .. })));
    }

    #[test]
    fn results_do_not_depend_on_batch() {
        let base = TrialPlan::new(3000, 9, 8);
        let f = |t: u64| {
            let p = base.path(t, 1, 1.0)?;
            derivative_integral(&DriftSpec::parse("sin").unwrap(), &p)
        };
        let a = estimate_exp_moment(&Sequential, f, 0.05, &base.with_batch(1)).unwrap();
        let b = estimate_exp_moment(&Sequential, f, 0.05, &base.with_batch(1000)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_fit_is_inverted() {
        let lambdas: Vec<f64> = (0..12).map(|i| 0.25 * i as f64).collect();
        let fit = fit_concentration(&synthetic_tail(0.3, &lambdas)).unwrap();
        assert!((fit.alpha_hat - 0.3).abs() < 1e-6);
        assert!((fit.c_hat - 1.0).abs() < 1e-6);
        assert!(fit.decaying);
    }

    #[test]
    fn three_bins_are_unsupported() {
        let t = synthetic_tail(0.3, &[0.0, 0.5, 1.0]);
        assert!(matches!(fit_concentration(&t), Err(Error::FitUnsupported { supported: 3, .. })));
    }

    #[test]
    fn flat_tail_is_non_decaying() {
        let mut t = synthetic_tail(0.0, &[0.0, 0.5, 1.0, 1.5, 2.0]);
        t.probs = vec![1.0; 5];
        let fit = fit_concentration(&t).unwrap();
        assert!(fit.alpha_hat.abs() < 1e-12);
        assert!(!fit.decaying);
    }

    #[test]
    fn equal_shifts_are_degenerate() {
        let w = TimeWindow::new(0.0, 0.5).unwrap();
        let h = ConstantShift::zero(w, 1);
        let plan = TrialPlan::new(10, 1, 6);
        let r = tail_curve(&Sequential, &DriftSpec::parse("sin").unwrap(), &h, &h, &[0.0], &plan);
        assert_eq!(r, Err(Error::DegenerateNormalizer));
    }

    #[test]
    fn tail_curve_of_smooth_drift() {
        let w = TimeWindow::new(0.0, 0.5).unwrap();
        let h1 = ConstantShift::zero(w, 1);
        let h2 = ConstantShift::new(w, vec![0.1]);
        let plan = TrialPlan::new(2000, 4, 8);
        let lambdas: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let t = tail_curve(&Sequential, &DriftSpec::parse("sin").unwrap(), &h1, &h2, &lambdas, &plan).unwrap();
        assert_eq!(t.probs[0], 1.0);
        assert!(t.probs.windows(2).all(|p| p[0] >= p[1]));
        assert!((t.normalizer - 0.5f64.sqrt() * 0.1).abs() < 1e-15);
    }

    #[test]
    fn linear_drift_statistic_is_scale_invariant() {
        let w = TimeWindow::new(0.25, 0.5).unwrap();
        let b = DriftSpec::parse("linear").unwrap();
        let plan = TrialPlan::new(200, 2, 8);
        let lambdas = [0.0, 0.25, 0.45, 0.55, 1.0];
        let base = |s: f64| {
            let h1 = ConstantShift::new(w, vec![0.3 * s]);
            let h2 = ConstantShift::new(w, vec![-0.2 * s]);
            tail_curve(&Sequential, &b, &h1, &h2, &lambdas, &plan).unwrap()
        };
        let t1 = base(1.0);
        for s in [0.25, 2.0, 8.0] {
            let ts = base(s);
            assert_eq!(ts.probs, t1.probs);
            assert_eq!(ts.probs, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
            assert_eq!(ts.normalizer, s * t1.normalizer);
        }
    }

    #[test]
    fn wilson_interval_covers() {
        let p = 0.07;
        let n = 400u64;
        let mut covered = 0;
        for rep in 0..1000u64 {
            let mut rng = KeyedStream::from_words(&[tag::SYNTH, 77, rep]);
            let k = (0..n).filter(|_| rng.uniform() < p).count() as u64;
            let (lo, hi) = stats::wilson95(k, n);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        assert!(covered >= 930, "{covered}");
    }

    proptest! {
        #[test]
        fn tail_invariants(values in prop::collection::vec(0.0f64..5.0, 1..200), mut lambdas in prop::collection::vec(0.0f64..5.0, 1..20)) {
            lambdas.sort_by(f64::total_cmp);
            let t = tail_from_statistics(&values, &lambdas, 1.0).unwrap();
            for i in 0..lambdas.len() {
                prop_assert!(0.0 <= t.ci_low[i] && t.ci_low[i] <= t.probs[i]);
                prop_assert!(t.probs[i] <= t.ci_high[i] && t.ci_high[i] <= 1.0);
                let direct = values.iter().filter(|v| **v > lambdas[i]).count() as u64;
                prop_assert_eq!(t.exceedances[i], direct);
                if i > 0 {
                    prop_assert!(t.probs[i] <= t.probs[i - 1]);
                }
            }
        }
    }
}
