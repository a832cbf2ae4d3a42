//! Uniqueness audit: numerical candidate solutions under a shared noise,
//! the dyadic certificate built from the flow, the Hölder-drift
//! certificate, and the drift-integral continuity check.
//!
//! With `X(y, s, t)` the flow and `Y` a candidate, the dyadic certificate
//! looks at `f(t) = X(x, 0, r) - X(Y_t, t, r)` on the points `i r / M`.
//! `f(0) = 0` by construction and `f(r) = X(x, 0, r) - Y_r`. Each level
//! `M` uses its own candidate with `dt_M = r / (4M)`, so the endpoint value
//! measures how fast candidates approach the flow.

use alloc::vec;
use alloc::vec::Vec;
use libm::{log, pow, sqrt};

use crate::drift::{conjugate, DriftSpec};
use crate::error::{Error, Result};
use crate::flow::{increments, FlowOracle, Stepper};
use crate::functionals::{shifted_drift_difference, Perturbation};
use crate::mc::{run_trials, Executor, TrialPlan};
use crate::paths::{BrownianPath, TimeWindow};
use crate::stats::{self, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardGuess {
    /// `Y ≡ x0 + W`.
    Noise,
    /// `Y ≡ x0`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CandidateScheme {
    Euler,
    /// Drift evaluated at a half-step predictor.
    EulerMidpoint,
    Picard { iterations: u32, guess: PicardGuess },
    /// Euler with a kick of `magnitude · dt` added after the first step.
    RestartPerturbed { magnitude: f64 },
    /// The flow's own trajectory from `x0`.
    Flow,
}

impl CandidateScheme {
    pub fn name(&self) -> &'static str {
        match self {
            CandidateScheme::Euler => "euler",
            CandidateScheme::EulerMidpoint => "euler-midpoint",
            CandidateScheme::Picard { .. } => "picard",
            CandidateScheme::RestartPerturbed { .. } => "restart-perturbed",
            CandidateScheme::Flow => "flow",
        }
    }

    /// The four numerical variants audited by default.
    pub fn defaults() -> Vec<CandidateScheme> {
        vec![
            CandidateScheme::Euler,
            CandidateScheme::EulerMidpoint,
            CandidateScheme::Picard {
                iterations: 30,
                guess: PicardGuess::Noise,
            },
            CandidateScheme::RestartPerturbed { magnitude: 1.0 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSolution {
    pub scheme: CandidateScheme,
    pub dt: f64,
    pub x0: f64,
    /// `Y_{k dt}`, `k = 0..=steps`.
    pub values: Vec<f64>,
    pub noise_seed: u64,
    pub noise_trial: u64,
}

impl CandidateSolution {
    /// `Y_t` for `t` on the candidate grid.
    pub fn at(&self, t: f64) -> Result<f64> {
        let r = t / self.dt;
        let k = libm::round(r) as usize;
        if (r - k as f64).abs() > 1e-9 || k >= self.values.len() {
            return Err(Error::Precondition(alloc::format!("t = {t} is not on the candidate grid (dt = {})", self.dt)));
        }
        Ok(self.values[k])
    }

    pub fn sup_distance(&self, other: &CandidateSolution) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::Precondition("candidates live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// The trajectory of `oracle` from `(0, x0)` on the `dt` grid.
    pub fn from_flow(stepper: &Stepper<'_>, x0: f64, noise: &BrownianPath) -> Result<Self> {
        let mut values = vec![x0; stepper.steps() + 1];
        stepper
            .run(0, stepper.steps(), x0, |k, d| values[k] = x0 + d)
            .map_err(|_| Error::Hull {
                x: x0,
                lo: f64::NAN,
                hi: f64::NAN,
            })?;
        Ok(Self {
            scheme: CandidateScheme::Flow,
            dt: stepper.dt,
            x0,
            values,
            noise_seed: noise.seed,
            noise_trial: noise.trial_index,
        })
    }
}

/// Numerical solutions of `Y_t = x0 + ∫ b(s, Y_s) ds + W_t` on the same
/// noise, one per variant.
pub fn make_candidates(
    b: &DriftSpec,
    noise: &BrownianPath,
    x0: f64,
    dt: f64,
    variants: &[CandidateScheme],
) -> Result<Vec<CandidateSolution>> {
    if b.dim != 1 || noise.dim != 1 {
        return Err(Error::UnsupportedDimension {
            expected: 1,
            got: b.dim.max(noise.dim),
        });
    }
    let dw = increments(noise, dt)?;
    let n = dw.len();
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let mut y = vec![x0; n + 1];
        match *v {
            CandidateScheme::Euler => {
                for k in 0..n {
                    y[k + 1] = y[k] + b.eval1(k as f64 * dt, y[k]) * dt + dw[k];
                }
            }
            CandidateScheme::EulerMidpoint => {
                for k in 0..n {
                    let t = k as f64 * dt;
                    let half = y[k] + 0.5 * (b.eval1(t, y[k]) * dt + dw[k]);
                    y[k + 1] = y[k] + b.eval1(t + 0.5 * dt, half) * dt + dw[k];
                }
            }
            CandidateScheme::RestartPerturbed { magnitude } => {
                for k in 0..n {
                    y[k + 1] = y[k] + b.eval1(k as f64 * dt, y[k]) * dt + dw[k];
                    if k == 0 {
                        y[1] += magnitude * dt;
                    }
                }
            }
            CandidateScheme::Picard { iterations, guess } => {
                let mut w = vec![0.0; n + 1];
                for k in 0..n {
                    w[k + 1] = w[k] + dw[k];
                }
                if guess == PicardGuess::Noise {
                    for k in 0..=n {
                        y[k] = x0 + w[k];
                    }
                }
                let mut next = vec![x0; n + 1];
                for _ in 0..iterations {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += b.eval1(k as f64 * dt, y[k]) * dt;
                        next[k + 1] = x0 + acc + w[k + 1];
                    }
                    core::mem::swap(&mut y, &mut next);
                }
            }
            CandidateScheme::Flow => {
                return Err(Error::Precondition("flow candidates come from CandidateSolution::from_flow".into()))
            }
        }
        out.push(CandidateSolution {
            scheme: *v,
            dt,
            x0,
            values: y,
            noise_seed: noise.seed,
            noise_trial: noise.trial_index,
        });
    }
    Ok(out)
}

/// `c dt^{1/2} log(1/dt)`.
pub fn strong_envelope(c: f64, dt: f64) -> f64 {
    c * sqrt(dt) * log(1.0 / dt)
}

/// Per-step exponent of the certificate as a fraction: `(4/3)(4/5)`.
pub const STEP_EXPONENT: (i64, i64) = (16, 15);

/// `M` steps of size `M^{-16/15}` leave `M^{-1/15}`: the endpoint exponent
/// `1 - 16/15` as a reduced fraction.
pub fn endpoint_exponent() -> (i64, i64) {
    let (a, b) = (4 * 4, 3 * 5);
    debug_assert_eq!((a, b), STEP_EXPONENT);
    let (num, den) = (b - a, b);
    let g = gcd(num.abs(), den);
    (num / g, den / g)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `(M (M^{-4/3})^{4/5}, M^{-1/15})`.
pub fn exponent_identity(m: f64) -> (f64, f64) {
    (m * pow(pow(m, -4.0 / 3.0), 4.0 / 5.0), pow(m, -1.0 / 15.0))
}

/// Tolerance for `f(0) = 0` and for the flow's own trajectory, set by the
/// `ψ` round trip of the transformed scheme.
pub const INTERPOLATION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessCertificate {
    pub r: f64,
    pub x0: f64,
    pub levels: Vec<u64>,
    pub step_sups: Vec<f64>,
    pub endpoint_abs: Vec<f64>,
    /// `|f(0)|` per level.
    pub f0: Vec<f64>,
    /// Fit of `log endpoint_abs` on `log M` over levels with a nonzero
    /// endpoint.
    pub fit: Option<LineFit>,
    /// `-fit.slope`: positive when the endpoint decays.
    pub decay_slope: Option<f64>,
}

/// Certificate of the candidates `ys[i]` (one per level `levels[i]`)
/// against `oracle`. Every candidate grid must contain the points `i r/M`.
pub fn certificate(
    oracle: &dyn FlowOracle,
    ys: &[&CandidateSolution],
    x0: f64,
    r: f64,
    levels: &[u64],
) -> Result<UniquenessCertificate> {
    if ys.len() != levels.len() || levels.is_empty() {
        return Err(Error::Precondition("one candidate per level".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("levels must increase".into()));
    }
    let base = oracle.flow(0.0, r, x0)?;
    let mut step_sups = Vec::with_capacity(levels.len());
    let mut endpoint_abs = Vec::with_capacity(levels.len());
    let mut f0 = Vec::with_capacity(levels.len());
    for (y, &m) in ys.iter().zip(levels) {
        let mut prev: Option<f64> = None;
        let mut sup: f64 = 0.0;
        let mut g0 = 0.0;
        let mut last = 0.0;
        for i in 0..=m {
            let t = r * i as f64 / m as f64;
            let yt = y.at(t)?;
            let g = if i == m { yt } else { oracle.flow(t, r, yt)? };
            if i == 0 {
                g0 = g;
            }
            if let Some(p) = prev {
                sup = sup.max((g - p).abs());
            }
            prev = Some(g);
            last = g;
        }
        f0.push((base - g0).abs());
        step_sups.push(sup);
        endpoint_abs.push((base - last).abs());
    }
    let (xs, ls): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .zip(&endpoint_abs)
        .filter(|(_, e)| **e > 0.0)
        .map(|(m, e)| (log(*m as f64), log(*e)))
        .unzip();
    let fit = if xs.len() >= 2 { stats::line_fit(&xs, &ls) } else { None };
    Ok(UniquenessCertificate {
        r,
        x0,
        levels: levels.to_vec(),
        step_sups,
        endpoint_abs,
        f0,
        decay_slope: fit.map(|f| -f.slope),
        fit,
    })
}

/// Candidates for each level `M` with `dt_M = r / (4M)`, checked against
/// `oracle`.
pub fn level_coupled_certificate(
    oracle: &dyn FlowOracle,
    b: &DriftSpec,
    noise: &BrownianPath,
    scheme: CandidateScheme,
    x0: f64,
    r: f64,
    levels: &[u64],
) -> Result<UniquenessCertificate> {
    let mut cands = Vec::with_capacity(levels.len());
    for &m in levels {
        let dt = r / (4 * m) as f64;
        cands.push(make_candidates(b, noise, x0, dt, &[scheme])?.remove(0));
    }
    let refs: Vec<&CandidateSolution> = cands.iter().collect();
    certificate(oracle, &refs, x0, r, levels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoelderCertificate {
    pub beta: f64,
    pub p1: f64,
    pub p2: f64,
    /// `β/p₁ + 1/p₂`.
    pub exponent_sum: f64,
    pub alpha: f64,
    pub delta: f64,
    pub t: f64,
    pub f0: f64,
    /// `log |f(r) - f(u)|` on `log |r - u|` over node pairs.
    pub modulus_fit: LineFit,
    pub pairs: usize,
    /// `(log |r - u|, log |f(r) - f(u)|)` for pooling across noises.
    pub points: Vec<(f64, f64)>,
}

impl HoelderCertificate {
    /// The 95% interval of the modulus exponent reaches 1.
    pub fn superlinear_within_ci(&self) -> bool {
        self.modulus_fit.slope_ci95().1 >= 1.0
    }
}

/// `α (β/p₁ + 1/p₂) - 1`.
pub fn delta_for(alpha: f64, beta: f64, p1: f64, p2: f64) -> f64 {
    alpha * beta / p1 + alpha / p2 - 1.0
}

/// `α` halfway between `1/(β/p₁ + 1/p₂)` and 1, and its `δ`.
pub fn feasible_alpha(beta: f64, p1: f64, p2: f64) -> Result<(f64, f64)> {
    let s = beta / p1 + 1.0 / p2;
    if !(s > 1.0) {
        return Err(Error::Inapplicable(alloc::format!("β/p₁ + 1/p₂ = {s} is not > 1")));
    }
    let alpha = 0.5 * (1.0 / s + 1.0);
    Ok((alpha, delta_for(alpha, beta, p1, p2)))
}

/// `f(s) = X(s, t, Y_s) - X(0, t, x0)` on `2^k + 1` nodes of `[0, t]`, and
/// the regression of `log |f(r) - f(u)|` on `log |r - u|`.
pub fn holder_certificate(
    oracle: &dyn FlowOracle,
    y: &CandidateSolution,
    b: &DriftSpec,
    t: f64,
    k: u32,
) -> Result<HoelderCertificate> {
    let report = b.check_hoelder_conditions()?;
    if !report.holds {
        return Err(Error::Inapplicable(alloc::format!(
            "Hölder conditions fail (β/p₁ + 1/p₂ = {})",
            report.condition3_value
        )));
    }
    let meta = b.hoelder_meta().ok_or(Error::Metadata("Hölder metadata"))?;
    let (p1, p2) = (conjugate(meta.q1), conjugate(meta.q2));
    let (alpha, delta) = feasible_alpha(meta.beta, p1, p2)?;
    let base = oracle.flow(0.0, t, y.x0)?;
    let n = 1usize << k;
    let mut f = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let s = t * i as f64 / n as f64;
        let ys = y.at(s)?;
        let x = if i == n { ys } else { oracle.flow(s, t, ys)? };
        f.push(x - base);
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for i in 0..=n {
        for j in i + 1..=n {
            let d = (f[j] - f[i]).abs();
            if d > 0.0 {
                xs.push(log(t * (j - i) as f64 / n as f64));
                vs.push(log(d));
            }
        }
    }
    let modulus_fit = stats::line_fit(&xs, &vs).ok_or_else(|| Error::Statistical("f is constant on the nodes".into()))?;
    Ok(HoelderCertificate {
        beta: meta.beta,
        p1,
        p2,
        exponent_sum: meta.beta / p1 + 1.0 / p2,
        alpha,
        delta,
        t,
        f0: f[0].abs(),
        modulus_fit,
        pairs: xs.len(),
        points: xs.into_iter().zip(vs).collect(),
    })
}

/// `h_k = (1 - s_k) h + s_k g`: converges to `h` uniformly as `s_k → 0` and
/// stays in `Lip_N` when `h` and `g` do.
#[derive(Debug, Clone)]
pub struct Blend<'a, P: ?Sized, Q: ?Sized> {
    pub h: &'a P,
    pub g: &'a Q,
    pub s: f64,
    pub dim: usize,
}

impl<P: Perturbation + ?Sized, Q: Perturbation + ?Sized> Perturbation for Blend<'_, P, Q> {
    fn window(&self) -> TimeWindow {
        self.h.window()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        self.h.eval_into(t, &mut a);
        self.g.eval_into(t, &mut b);
        for c in 0..self.dim {
            out[c] = (1.0 - self.s) * a[c] + self.s * b[c];
        }
    }

    fn breakpoints(&self) -> Option<Vec<f64>> {
        let mut v = self.h.breakpoints()?;
        v.extend(self.g.breakpoints()?);
        Some(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub scales: Vec<f64>,
    /// Mollification widths `w_n`; envelopes use `ε_n = w_n`.
    pub widths: Vec<f64>,
    /// Median over paths of `|φ_b(h_k) - φ_b(h)|`, per scale.
    pub median_gap: Vec<f64>,
    pub max_gap: Vec<f64>,
    /// `[width][scale]`: median of `|φ_{b_n}(h_k) - φ_{b_n}(h)|`.
    pub median_gap_mollified: Vec<Vec<f64>>,
    /// `[width][scale]`: fraction of paths with
    /// `|φ_b(h_k) - φ_b(h)| > |φ_{b_n}(h_k) - φ_{b_n}(h)| + 4 ε_n`.
    pub exceed_frac: Vec<Vec<f64>>,
    pub n_paths: u64,
}

impl ContinuityReport {
    /// Median gaps are non-increasing in the scale and the smallest is
    /// below the largest.
    pub fn trend_holds(&self) -> bool {
        let g = &self.median_gap;
        g.windows(2).all(|w| w[1] <= w[0]) && g.last() < g.first()
    }
}

/// Continuity of `h ↦ ∫ b(s, W_s + h(s)) ds` along `h_k = (1 - s_k) h +
/// s_k g`, with mollified drifts standing in for continuous approximants.
pub fn drift_integral_continuity<E, P, Q>(
    exec: &E,
    b: &DriftSpec,
    h_limit: &P,
    g: &Q,
    scales: &[f64],
    widths: &[f64],
    plan: &TrialPlan,
) -> Result<ContinuityReport>
where
    E: Executor,
    P: Perturbation + Sync + ?Sized,
    Q: Perturbation + Sync + ?Sized,
{
    if scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("scales must decrease".into()));
    }
    let moll: Vec<DriftSpec> = widths.iter().map(|w| b.clone().mollified(*w)).collect::<Result<_>>()?;
    let dim = b.dim;
    let rows = run_trials(exec, plan, |trial| {
        let path = plan.path(trial, dim, b.horizon)?;
        let mut raw = Vec::with_capacity(scales.len());
        let mut sm = vec![Vec::with_capacity(scales.len()); moll.len()];
        for &s in scales {
            let hk = Blend { h: h_limit, g, s, dim };
            raw.push(shifted_drift_difference(b, &path, &hk, h_limit)?.abs());
            for (i, bn) in moll.iter().enumerate() {
                sm[i].push(shifted_drift_difference(bn, &path, &hk, h_limit)?.abs());
            }
        }
        Ok((raw, sm))
    })?;
    let n = rows.len() as u64;
    let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r.0[k]).collect() };
    let median_gap: Vec<f64> = (0..scales.len()).map(|k| stats::median(&col(k))).collect();
    let max_gap: Vec<f64> = (0..scales.len()).map(|k| col(k).into_iter().fold(0.0, f64::max)).collect();
    let mut median_gap_mollified = Vec::with_capacity(widths.len());
    let mut exceed_frac = Vec::with_capacity(widths.len());
    for (i, &w) in widths.iter().enumerate() {
        let mut med = Vec::with_capacity(scales.len());
        let mut ex = Vec::with_capacity(scales.len());
        for k in 0..scales.len() {
            let v: Vec<f64> = rows.iter().map(|r| r.1[i][k]).collect();
            med.push(stats::median(&v));
            let count = rows.iter().filter(|r| r.0[k] > r.1[i][k] + 4.0 * w).count();
            ex.push(count as f64 / n as f64);
        }
        median_gap_mollified.push(med);
        exceed_frac.push(ex);
    }
    Ok(ContinuityReport {
        scales: scales.to_vec(),
        widths: widths.to_vec(),
        median_gap,
        max_gap,
        median_gap_mollified,
        exceed_frac,
        n_paths: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowDrift;
    use crate::mc::Sequential;
    use crate::nets::LipFunction;
    use crate::paths::sample_path;
    use crate::zvonkin::{find_lambda, PdeGrid};

    fn spec(id: &str) -> DriftSpec {
        DriftSpec::parse(id).unwrap()
    }

    #[test]
    fn zero_drift_variants_coincide() {
        let b = spec("zero");
        let noise = sample_path(10, 1, 1.0, 2, 0).unwrap();
        let mut vs = CandidateScheme::defaults();
        vs.push(CandidateScheme::Picard {
            iterations: 0,
            guess: PicardGuess::Noise,
        });
        vs.retain(|v| !matches!(v, CandidateScheme::RestartPerturbed { .. }));
        vs.push(CandidateScheme::RestartPerturbed { magnitude: 0.0 });
        let cs = make_candidates(&b, &noise, 0.3, noise.grid.dt(), &vs).unwrap();
        for c in &cs {
            for (k, v) in c.values.iter().enumerate() {
                assert!((v - (0.3 + noise.x(k))).abs() < 1e-12, "{:?}", c.scheme);
            }
        }
    }

    #[test]
    fn picard_without_iterations_is_within_the_drift_bound() {
        let b = spec("checkerboard:cell=0.1");
        let noise = sample_path(10, 1, 1.0, 3, 0).unwrap();
        let dt = noise.grid.dt();
        let cs = make_candidates(
            &b,
            &noise,
            0.0,
            dt,
            &[
                CandidateScheme::Euler,
                CandidateScheme::Picard {
                    iterations: 0,
                    guess: PicardGuess::Noise,
                },
            ],
        )
        .unwrap();
        for k in 0..cs[0].values.len() {
            assert!((cs[0].values[k] - cs[1].values[k]).abs() <= b.bound() * k as f64 * dt + 1e-12);
        }
    }

    #[test]
    fn smooth_variants_collapse() {
        let noise = sample_path(14, 1, 1.0, 4, 0).unwrap();
        let dt = noise.grid.dt();
        for b in crate::drift::smooth_suite() {
            let cs = make_candidates(&b, &noise, 0.2, dt, &CandidateScheme::defaults()).unwrap();
            for i in 0..cs.len() {
                for j in i + 1..cs.len() {
                    assert!(cs[i].sup_distance(&cs[j]).unwrap() <= strong_envelope(1.0, dt));
                }
            }
        }
    }

    #[test]
    fn exponent_bookkeeping() {
        assert_eq!(endpoint_exponent(), (-1, 15));
        for m in [16.0, 1024.0, 1e6] {
            let (a, b) = exponent_identity(m);
            assert!((a - b).abs() <= 1e-14 * b);
        }
    }

    #[test]
    fn own_trajectory_certificate_vanishes() {
        let b = spec("signosc");
        let f = find_lambda(&b, PdeGrid::for_drift(&b, 256, 128), 0.5).unwrap();
        let noise = sample_path(10, 1, 1.0, 7, 0).unwrap();
        let st = Stepper::new(FlowDrift::Transformed(&f.solution), &noise, noise.grid.dt()).unwrap();
        let own = CandidateSolution::from_flow(&st, 0.1, &noise).unwrap();
        let levels = [4u64, 8, 16];
        let c = certificate(&st, &[&own, &own, &own], 0.1, 0.5, &levels).unwrap();
        for i in 0..levels.len() {
            assert!(c.endpoint_abs[i] <= INTERPOLATION_TOL);
            assert!(c.f0[i] <= INTERPOLATION_TOL);
            assert!(c.step_sups[i] <= INTERPOLATION_TOL);
        }
    }

    #[test]
    fn certificate_of_direct_euler_against_itself_is_exact() {
        let b = spec("tanh");
        let noise = sample_path(8, 1, 1.0, 1, 0).unwrap();
        let st = Stepper::new(FlowDrift::Direct(&b), &noise, noise.grid.dt()).unwrap();
        let y = make_candidates(&b, &noise, 0.0, noise.grid.dt(), &[CandidateScheme::Euler]).unwrap();
        let c = certificate(&st, &[&y[0]], 0.0, 0.5, &[8]).unwrap();
        assert_eq!(c.f0[0], 0.0);
        assert!(c.endpoint_abs[0] < 1e-12);
        assert!(c.step_sups[0] < 1e-12);
    }

    #[test]
    fn perturbed_candidate_decays_on_smooth_drift() {
        let b = spec("sin");
        let noise = sample_path(12, 1, 1.0, 5, 0).unwrap();
        let st = Stepper::new(FlowDrift::Direct(&b), &noise, noise.grid.dt()).unwrap();
        let c = level_coupled_certificate(
            &st,
            &b,
            &noise,
            CandidateScheme::RestartPerturbed { magnitude: 1.0 },
            0.0,
            0.5,
            &[16, 32, 64, 128, 256],
        )
        .unwrap();
        assert!(c.decay_slope.unwrap() > 0.5, "{c:?}");
    }

    #[test]
    fn alpha_delta_substitution() {
        assert!((delta_for(0.6, 1.0, 1.0, 1.0) - 0.2).abs() < 1e-15);
        let (a, d) = feasible_alpha(0.6, 4.0 / 3.0, 4.0 / 3.0).unwrap();
        assert!(a > 0.0 && a < 1.0 && d > 0.0);
        assert!(matches!(feasible_alpha(0.5, 2.0, 2.0), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn holder_certificate_needs_the_conditions() {
        let b = spec("checkerboard");
        let noise = sample_path(8, 1, 1.0, 1, 0).unwrap();
        let st = Stepper::new(FlowDrift::Direct(&b), &noise, noise.grid.dt()).unwrap();
        let y = make_candidates(&b, &noise, 0.0, noise.grid.dt(), &[CandidateScheme::Euler]).unwrap();
        assert!(holder_certificate(&st, &y[0], &b, 0.5, 4).is_err());
        let h = spec("holder:beta=0.2,q1=4,q2=4");
        assert!(matches!(holder_certificate(&st, &y[0], &h, 0.5, 4), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn holder_certificate_has_f0_zero() {
        let b = crate::drift::hoelder_fixture();
        let noise = sample_path(10, 1, 1.0, 6, 0).unwrap();
        let st = Stepper::new(FlowDrift::Direct(&b), &noise, noise.grid.dt()).unwrap();
        let y = make_candidates(&b, &noise, 0.0, 4.0 * noise.grid.dt(), &[CandidateScheme::Euler]).unwrap();
        let c = holder_certificate(&st, &y[0], &b, 0.5, 5).unwrap();
        assert_eq!(c.f0, 0.0);
        assert!(c.modulus_fit.slope.is_finite());
    }

    #[test]
    fn continuity_degenerate_cases() {
        let w = TimeWindow::new(0.0, 1.0).unwrap();
        let h = LipFunction::constant(w, &[0.1], 1.0).unwrap();
        let g = LipFunction::new(w, vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 0.0], 1, 1.0).unwrap();
        let plan = TrialPlan::new(20, 3, 10);
        let cb = spec("checkerboard:cell=0.1");
        let r = drift_integral_continuity(&Sequential, &cb, &h, &h, &[0.5, 0.25], &[1.0 / 16.0], &plan).unwrap();
        assert!(r.median_gap.iter().chain(&r.max_gap).all(|v| *v == 0.0));
        let b = spec("sin");
        let lip = b.lipschitz().unwrap();
        let scales = [0.5, 0.25, 0.125];
        let r = drift_integral_continuity(&Sequential, &b, &h, &g, &scales, &[], &plan).unwrap();
        let dist = crate::functionals::sup_distance(&h, &g, 1);
        for (k, s) in scales.iter().enumerate() {
            assert!(r.max_gap[k] <= lip * s * dist + 1e-12);
        }
    }
}
