//! Solution flows `φ_{s,t}(x)` under a common noise path.
//!
//! The flow is the Euler scheme, either for `dX = b dt + dW` directly or for
//! the transformed equation `dY = b̃ dt + σ̃ dW` mapped back by `ψ_t^{-1}`.
//! All trajectories of a table share the same Brownian increments.
//! Trajectories are advanced in displacement form (`X = x + D`), so for a
//! spatially constant drift the displacement is bitwise independent of `x`.

use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, log, pow, sqrt};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::mc::{run_trials, Executor, TrialPlan};
use crate::paths::BrownianPath;
use crate::stats;
use crate::zvonkin::ZvonkinSolution;

#[derive(Debug, Clone, Copy)]
pub enum FlowDrift<'a> {
    Direct(&'a DriftSpec),
    Transformed(&'a ZvonkinSolution),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Direct,
    Transformed,
}

impl FlowDrift<'_> {
    pub fn scheme(&self) -> Scheme {
        match self {
            FlowDrift::Direct(_) => Scheme::Direct,
            FlowDrift::Transformed(_) => Scheme::Transformed,
        }
    }
}

/// Brownian increments over steps of `dt` read off a path whose grid
/// spacing divides `dt`.
pub fn increments(noise: &BrownianPath, dt: f64) -> Result<Vec<f64>> {
    let ratio = dt / noise.grid.dt();
    let stride = libm::round(ratio) as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-9 || noise.grid.cells() % stride != 0 {
        return Err(Error::Precondition(alloc::format!(
            "dt = {dt} is not a multiple of the noise spacing {}",
            noise.grid.dt()
        )));
    }
    let steps = noise.grid.cells() / stride;
    Ok((0..steps)
        .map(|k| noise.x((k + 1) * stride) - noise.x(k * stride))
        .collect())
}

/// One Euler scheme on a fixed noise.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    pub drift: FlowDrift<'a>,
    pub dw: Vec<f64>,
    pub dt: f64,
}

/// A trajectory left the transformed coefficients' domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Escaped;

impl<'a> Stepper<'a> {
    pub fn new(drift: FlowDrift<'a>, noise: &BrownianPath, dt: f64) -> Result<Self> {
        if let FlowDrift::Transformed(sol) = drift {
            if (sol.grid.horizon - noise.grid.horizon).abs() > 1e-12 {
                return Err(Error::Precondition("PDE and noise horizons differ".into()));
            }
        }
        Ok(Self {
            drift,
            dw: increments(noise, dt)?,
            dt,
        })
    }

    pub fn steps(&self) -> usize {
        self.dw.len()
    }

    /// Step index of time `t`, which must be a multiple of `dt`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let r = t / self.dt;
        let k = libm::round(r) as usize;
        if (r - k as f64).abs() > 1e-9 || k > self.steps() {
            return Err(Error::Precondition(alloc::format!("time {t} is not on the dt = {} grid", self.dt)));
        }
        Ok(k)
    }

    /// Runs from step `k0` at `x` up to step `k1`, calling `visit(k, D_k)`
    /// with the displacement `D_k = X_{t_k} - x` for `k0 ..= k1`. On escape
    /// the trajectory is frozen at its last value.
    pub fn run<V: FnMut(usize, f64)>(&self, k0: usize, k1: usize, x: f64, mut visit: V) -> core::result::Result<(), Escaped> {
        let dt = self.dt;
        match self.drift {
            FlowDrift::Direct(b) => {
                let mut d = 0.0;
                visit(k0, d);
                for k in k0..k1 {
                    let t = k as f64 * dt;
                    d += b.eval1(t, x + d) * dt + self.dw[k];
                    visit(k + 1, d);
                }
                Ok(())
            }
            FlowDrift::Transformed(sol) => {
                let t0 = k0 as f64 * dt;
                let y0 = match sol.psi(t0, x) {
                    Ok(y) => y,
                    Err(_) => {
                        for k in k0..=k1 {
                            visit(k, 0.0);
                        }
                        return Err(Escaped);
                    }
                };
                let mut e = 0.0;
                let mut last = 0.0;
                visit(k0, 0.0);
                let tr = sol.transformed();
                for k in k0..k1 {
                    let t = k as f64 * dt;
                    let Ok((bt, st)) = tr.coefficients(t, y0 + e) else {
                        for kk in k + 1..=k1 {
                            visit(kk, last);
                        }
                        return Err(Escaped);
                    };
                    e += bt * dt + st * self.dw[k];
                    let Ok(xn) = sol.psi_inverse((k + 1) as f64 * dt, y0 + e) else {
                        for kk in k + 1..=k1 {
                            visit(kk, last);
                        }
                        return Err(Escaped);
                    };
                    last = xn - x;
                    visit(k + 1, last);
                }
                Ok(())
            }
        }
    }

    /// `φ_{s,t}(x)`.
    pub fn flow(&self, s: f64, t: f64, x: f64) -> Result<f64> {
        let (k0, k1) = (self.index_of(s)?, self.index_of(t)?);
        if k1 < k0 {
            return Err(Error::Precondition("flow needs s <= t".into()));
        }
        let mut out = 0.0;
        self.run(k0, k1, x, |k, d| {
            if k == k1 {
                out = d;
            }
        })
        .map_err(|_| Error::Hull {
            x,
            lo: f64::NAN,
            hi: f64::NAN,
        })?;
        Ok(x + out)
    }

    /// Transformed-coordinate trajectory `Y` from `Y_{t_{k0}} = y0` in
    /// displacement form; `visit(k, E_k, b̃, σ̃)` at each step before the
    /// update (`E_k = Y_k - y0`).
    fn run_transformed<V: FnMut(usize, f64)>(&self, y0: f64, mut visit: V) -> core::result::Result<(), Escaped> {
        let FlowDrift::Transformed(sol) = self.drift else {
            unreachable!("transformed run on direct scheme")
        };
        let tr = sol.transformed();
        let mut e = 0.0;
        visit(0, e);
        for k in 0..self.steps() {
            let t = k as f64 * self.dt;
            let (bt, st) = tr.coefficients(t, y0 + e).map_err(|_| Escaped)?;
            e += bt * self.dt + st * self.dw[k];
            visit(k + 1, e);
        }
        Ok(())
    }
}

/// `φ_{s,t}(x)` for `s ∈ s_grid`, `t ∈ t_grid`, `x ∈ x_grid` on one noise.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    pub s_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `φ_{s,t}(x) - x` at `(si * nt + ti) * nx + xi`; zero for `t ≤ s`.
    pub disp: Vec<f64>,
    /// One flag per `(s, x)` trajectory (transformed scheme only).
    pub escaped: Vec<bool>,
    pub noise_seed: u64,
    pub noise_trial: u64,
    pub scheme: Scheme,
    pub dt: f64,
}

impl FlowTable {
    #[inline]
    fn idx(&self, si: usize, ti: usize, xi: usize) -> usize {
        (si * self.t_grid.len() + ti) * self.x_grid.len() + xi
    }

    #[inline]
    pub fn displacement(&self, si: usize, ti: usize, xi: usize) -> f64 {
        self.disp[self.idx(si, ti, xi)]
    }

    /// `φ_{s_i, t_j}(x_k)` (identity when `t_j ≤ s_i`).
    pub fn value(&self, si: usize, ti: usize, xi: usize) -> f64 {
        self.x_grid[xi] + self.displacement(si, ti, xi)
    }

    pub fn escaped_count(&self) -> usize {
        self.escaped.iter().filter(|e| **e).count()
    }

    fn s_index(&self, s: f64) -> Option<usize> {
        self.s_grid.iter().position(|v| (v - s).abs() < 1e-12)
    }

    fn t_index(&self, t: f64) -> Option<usize> {
        self.t_grid.iter().position(|v| (v - t).abs() < 1e-12)
    }

    /// Linear interpolation in `x` of the displacement of `φ_{s_i, t_j}`.
    pub fn interp_displacement(&self, si: usize, ti: usize, x: f64) -> Result<f64> {
        let xs = &self.x_grid;
        let n = xs.len();
        if !(x >= xs[0] && x <= xs[n - 1]) {
            return Err(Error::Hull {
                x,
                lo: xs[0],
                hi: xs[n - 1],
            });
        }
        let j = xs.partition_point(|v| *v <= x).clamp(1, n - 1) - 1;
        let w = (x - xs[j]) / (xs[j + 1] - xs[j]);
        let a = self.displacement(si, ti, j);
        let b = self.displacement(si, ti, j + 1);
        Ok(a + w * (b - a))
    }
}

/// Uniform grid of `n` points on `[-radius, radius]`.
pub fn uniform_x_grid(radius: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -radius + 2.0 * radius * i as f64 / (n - 1) as f64)
        .collect()
}

/// Dyadic time nodes `k T / 2^level`.
pub fn dyadic_times(level: u32, horizon: f64) -> Vec<f64> {
    let n = 1usize << level;
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

pub fn simulate_flow(
    drift: FlowDrift<'_>,
    noise: &BrownianPath,
    s_grid: &[f64],
    t_grid: &[f64],
    x_grid: &[f64],
    dt: f64,
) -> Result<FlowTable> {
    let stepper = Stepper::new(drift, noise, dt)?;
    if x_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition("x_grid must be strictly increasing".into()));
    }
    let s_idx: Vec<usize> = s_grid.iter().map(|s| stepper.index_of(*s)).collect::<Result<_>>()?;
    let t_idx: Vec<usize> = t_grid.iter().map(|t| stepper.index_of(*t)).collect::<Result<_>>()?;
    if let FlowDrift::Transformed(sol) = drift {
        for &x in x_grid {
            if x < sol.grid.x_min || x > sol.grid.x_max {
                return Err(Error::Extrapolation {
                    x,
                    lo: sol.grid.x_min,
                    hi: sol.grid.x_max,
                });
            }
        }
    }
    let (ns, nt, nx) = (s_grid.len(), t_grid.len(), x_grid.len());
    let mut table = FlowTable {
        s_grid: s_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        x_grid: x_grid.to_vec(),
        disp: vec![0.0; ns * nt * nx],
        escaped: vec![false; ns * nx],
        noise_seed: noise.seed,
        noise_trial: noise.trial_index,
        scheme: drift.scheme(),
        dt,
    };
    let k_end = t_idx.iter().copied().max().unwrap_or(0);
    let mut at_step = vec![usize::MAX; k_end + 1];
    for (ti, &k) in t_idx.iter().enumerate() {
        at_step[k] = ti;
    }
    for (si, &k0) in s_idx.iter().enumerate() {
        if k0 > k_end {
            continue;
        }
        for (xi, &x) in x_grid.iter().enumerate() {
            let base = si * nt * nx;
            let disp = &mut table.disp;
            let r = stepper.run(k0, k_end, x, |k, d| {
                let ti = at_step[k];
                if ti != usize::MAX {
                    disp[base + ti * nx + xi] = d;
                }
            });
            table.escaped[si * nx + xi] = r.is_err();
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoelderFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
    pub alpha_se: f64,
    pub pair_count: usize,
}

pub const MIN_HOELDER_POINTS: usize = 8;
pub const MIN_HOELDER_PAIRS: usize = 30;

/// Least squares of `log max_{s ≤ t} |φ_{s,t}(x) - φ_{s,t}(y)|` on
/// `log |x - y|` over all pairs of grid points in `[-radius, radius]`.
pub fn holder_fit(table: &FlowTable, radius: f64) -> Result<HoelderFit> {
    let pts: Vec<usize> = (0..table.x_grid.len())
        .filter(|&i| table.x_grid[i].abs() <= radius + 1e-12)
        .collect();
    if pts.len() < MIN_HOELDER_POINTS {
        return Err(Error::Precondition(alloc::format!(
            "need >= {MIN_HOELDER_POINTS} x points within radius {radius}, got {}",
            pts.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (a, &i) in pts.iter().enumerate() {
        for &j in &pts[a + 1..] {
            let dx = table.x_grid[j] - table.x_grid[i];
            if dx == 0.0 {
                return Err(Error::DegeneratePair(i, j));
            }
            let mut sup = dx.abs();
            for si in 0..table.s_grid.len() {
                for ti in 0..table.t_grid.len() {
                    if table.t_grid[ti] <= table.s_grid[si] {
                        continue;
                    }
                    let d = dx + (table.displacement(si, ti, j) - table.displacement(si, ti, i));
                    sup = sup.max(d.abs());
                }
            }
            xs.push(log(dx.abs()));
            ys.push(log(sup));
        }
    }
    if xs.len() < MIN_HOELDER_PAIRS {
        return Err(Error::Precondition(alloc::format!(
            "need >= {MIN_HOELDER_PAIRS} pairs, got {}",
            xs.len()
        )));
    }
    let fit = stats::line_fit(&xs, &ys).ok_or_else(|| Error::Precondition("degenerate Hölder design".into()))?;
    Ok(HoelderFit {
        alpha_hat: fit.slope,
        c_hat: exp(fit.intercept),
        r_squared: fit.r_squared,
        alpha_se: fit.slope_se,
        pair_count: xs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullPolicy {
    /// Any intermediate point outside the x hull is an error.
    Strict,
    /// Such triples are skipped and counted.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionReport {
    pub max_residual: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// `max |φ_{s,t}(x) - φ_{u,t}(φ_{s,u}(x))|` over grid triples `s < u < t`
/// present in both time grids, with `φ_{u,t}` interpolated linearly in `x`.
pub fn composition_residual(table: &FlowTable, policy: HullPolicy) -> Result<CompositionReport> {
    if table.s_grid.len() < 3 {
        return Err(Error::Precondition("s_grid needs >= 3 nodes".into()));
    }
    let mut report = CompositionReport {
        max_residual: 0.0,
        evaluated: 0,
        skipped: 0,
    };
    for (si, &s) in table.s_grid.iter().enumerate() {
        for (ui_s, &u) in table.s_grid.iter().enumerate() {
            if u <= s {
                continue;
            }
            let Some(ui_t) = table.t_index(u) else { continue };
            for (ti, &t) in table.t_grid.iter().enumerate() {
                if t <= u {
                    continue;
                }
                for xi in 0..table.x_grid.len() {
                    let d_su = table.displacement(si, ui_t, xi);
                    let y = table.x_grid[xi] + d_su;
                    let inner = match table.interp_displacement(ui_s, ti, y) {
                        Ok(v) => v,
                        Err(e) => match policy {
                            HullPolicy::Strict => return Err(e),
                            HullPolicy::Skip => {
                                report.skipped += 1;
                                continue;
                            }
                        },
                    };
                    let r = (table.displacement(si, ti, xi) - d_su - inner).abs();
                    report.max_residual = report.max_residual.max(r);
                    report.evaluated += 1;
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointReport {
    pub a: f64,
    pub k: f64,
    pub x: f64,
    pub y: f64,
    /// Mean of `sup_t |Y^x_t - Y^y_t|^a`.
    pub sup_moment: f64,
    pub sup_moment_ci: (f64, f64),
    /// `C (|x-y|^a + |x-y|^{a-1})` with `C = sup_moment / (|x-y|^a + |x-y|^{a-1})`.
    pub bound_rhs: f64,
    pub c_fit: f64,
    /// `A_t` on the first trial, one value per step.
    pub a_path: Vec<f64>,
    /// Mean of `exp(k A_T)`.
    pub exp_a_estimate: f64,
    /// Mean of `exp(k A_T)` without the top 0.01% of trials.
    pub exp_a_trimmed: f64,
    pub escaped: u64,
}

struct TwoPointTrial {
    sup: f64,
    a_t: f64,
    a_path: Option<Vec<f64>>,
    escaped: bool,
}

/// Two transformed trajectories `Y^x`, `Y^y` on each trial path, with
/// `A_t = Σ |σ̃(s, Y^y) - σ̃(s, Y^x)|² / |Y^y - Y^x|² Δt` over steps where
/// `Y^y ≠ Y^x`.
pub fn two_point_moments<E: Executor>(
    exec: &E,
    sol: &ZvonkinSolution,
    x: f64,
    y: f64,
    a: f64,
    k: f64,
    plan: &TrialPlan,
) -> Result<TwoPointReport> {
    if a < 2.0 {
        return Err(Error::Precondition(alloc::format!("moment order a must be >= 2, got {a}")));
    }
    let horizon = sol.grid.horizon;
    let trials = run_trials(exec, plan, |trial| {
        let noise = plan.path(trial, 1, horizon)?;
        let dt = noise.grid.dt();
        let st = Stepper::new(FlowDrift::Transformed(sol), &noise, dt)?;
        let n = st.steps();
        let mut ex = vec![0.0; n + 1];
        let mut ey = vec![0.0; n + 1];
        let r1 = st.run_transformed(x, |kk, e| ex[kk] = e);
        let r2 = st.run_transformed(y, |kk, e| ey[kk] = e);
        let escaped = r1.is_err() || r2.is_err();
        let tr = sol.transformed();
        let mut sup: f64 = 0.0;
        let mut acc = 0.0;
        let mut path = if trial == 0 { Some(Vec::with_capacity(n + 1)) } else { None };
        if let Some(p) = path.as_mut() {
            p.push(0.0);
        }
        for kk in 0..=n {
            let gap = (y - x) + (ey[kk] - ex[kk]);
            sup = sup.max(gap.abs());
            if kk < n && gap != 0.0 && !escaped {
                let t = kk as f64 * dt;
                let sx = tr.sigma_tilde(t, x + ex[kk]).unwrap_or(1.0);
                let sy = tr.sigma_tilde(t, y + ey[kk]).unwrap_or(1.0);
                acc += (sy - sx) * (sy - sx) / (gap * gap) * dt;
            }
            if kk < n {
                if let Some(p) = path.as_mut() {
                    p.push(acc);
                }
            }
        }
        Ok(TwoPointTrial {
            sup: pow(sup, a),
            a_t: acc,
            a_path: path,
            escaped,
        })
    })?;
    let sups: Vec<f64> = trials.iter().map(|t| t.sup).collect();
    let n = sups.len() as f64;
    let m = stats::mean(&sups);
    let se = if sups.len() > 1 { sqrt(stats::variance(&sups) / n) } else { 0.0 };
    let d = (x - y).abs();
    let env = pow(d, a) + pow(d, a - 1.0);
    let c_fit = if env > 0.0 { m / env } else { 0.0 };
    let mut ek: Vec<f64> = trials.iter().map(|t| exp(k * t.a_t)).collect();
    let exp_a = stats::mean(&ek);
    ek.sort_by(f64::total_cmp);
    let cut = (ek.len() as f64 * crate::mc::TRIM_FRACTION) as usize;
    let exp_a_trimmed = stats::mean(&ek[..ek.len() - cut]);
    Ok(TwoPointReport {
        a,
        k,
        x,
        y,
        sup_moment: m,
        sup_moment_ci: (m - 1.96 * se, m + 1.96 * se),
        bound_rhs: c_fit * env,
        c_fit,
        a_path: trials[0].a_path.clone().unwrap_or_default(),
        exp_a_estimate: exp_a,
        exp_a_trimmed,
        escaped: trials.iter().filter(|t| t.escaped).count() as u64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointSlope {
    pub a: f64,
    pub deltas: Vec<f64>,
    pub reports: Vec<TwoPointReport>,
    pub fit: stats::LineFit,
    /// `max_δ sup_moment / (δ^a + δ^{a-1})`.
    pub c_hat: f64,
}

/// Regression of `log sup_moment` on `log |x - y|` for `y = x + δ`.
pub fn two_point_slope<E: Executor>(
    exec: &E,
    sol: &ZvonkinSolution,
    x: f64,
    deltas: &[f64],
    a: f64,
    k: f64,
    plan: &TrialPlan,
) -> Result<TwoPointSlope> {
    let mut reports = Vec::with_capacity(deltas.len());
    for &d in deltas {
        reports.push(two_point_moments(exec, sol, x, x + d, a, k, plan)?);
    }
    let xs: Vec<f64> = deltas.iter().map(|d| log(*d)).collect();
    let ys: Vec<f64> = reports.iter().map(|r| log(r.sup_moment)).collect();
    let fit = stats::line_fit(&xs, &ys).ok_or_else(|| Error::Precondition("need >= 2 deltas".into()))?;
    let c_hat = reports.iter().map(|r| r.c_fit).fold(0.0, f64::max);
    Ok(TwoPointSlope {
        a,
        deltas: deltas.to_vec(),
        reports,
        fit,
        c_hat,
    })
}

/// `X(x, s, t, W)`: a flow evaluated at arbitrary grid times and initial
/// points.
pub trait FlowOracle {
    fn flow(&self, s: f64, t: f64, x: f64) -> Result<f64>;
}

impl FlowOracle for FlowTable {
    /// `s` must be an `s_grid` node, `t` a `t_grid` node; linear
    /// interpolation in `x`.
    fn flow(&self, s: f64, t: f64, x: f64) -> Result<f64> {
        let si = self
            .s_index(s)
            .ok_or_else(|| Error::Precondition(alloc::format!("s = {s} not in s_grid")))?;
        let ti = self
            .t_index(t)
            .ok_or_else(|| Error::Precondition(alloc::format!("t = {t} not in t_grid")))?;
        if t <= s {
            return Ok(x);
        }
        Ok(x + self.interp_displacement(si, ti, x)?)
    }
}

impl FlowOracle for Stepper<'_> {
    fn flow(&self, s: f64, t: f64, x: f64) -> Result<f64> {
        Stepper::flow(self, s, t, x)
    }
}
