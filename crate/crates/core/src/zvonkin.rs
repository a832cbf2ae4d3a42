//! The backward parabolic problem
//!
//! ```text
//! ∂U/∂t + ½ U_xx + b U_x = λ U - b,   U(T, ·) = 0,
//! ```
//!
//! the map `ψ_t(x) = x + U(t, x)` and the coefficients of the transformed
//! equation `dY = b̃(t, Y) dt + σ̃(t, Y) dW`, in one space dimension.
//!
//! With `τ = T - t` the problem is the forward equation
//! `V_τ = ½ V_xx + b V_x - λ V + b`, `V(0) = 0`, marched by Crank–Nicolson on
//! a vertex grid with homogeneous Neumann ends. The drift enters through
//! cell averages at the half step in time.

use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, log, sqrt};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
    pub horizon: f64,
}

/// Spatial radius assumed for drifts without compact support.
pub const DEFAULT_RADIUS: f64 = 4.0;
/// Subsamples per cell for the cell averages of `b`.
const CELL_SAMPLES: usize = 8;
pub const LAMBDA_MAX: f64 = 1e6;

impl PdeGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, nt: usize, horizon: f64) -> Self {
        Self {
            x_min,
            x_max,
            nx,
            nt,
            horizon,
        }
    }

    /// Symmetric domain `[-(N + 4√T), N + 4√T]`, with `N` the drift's support
    /// radius (or [`DEFAULT_RADIUS`]).
    pub fn for_drift(spec: &DriftSpec, nx: usize, nt: usize) -> Self {
        let n = spec.support_radius().unwrap_or(DEFAULT_RADIUS).max(1.0);
        let half = n + 4.0 * sqrt(spec.horizon);
        Self::new(-half, half, nx, nt, spec.horizon)
    }

    /// Same domain with the spatial and temporal resolution doubled; the
    /// coarse vertices are a subset of the fine ones.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            nt: 2 * self.nt,
            ..*self
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + self.dx() * i as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.nt as f64
    }

    fn check(&self, spec: &DriftSpec) -> Result<()> {
        if self.nx < 16 || self.nt < 16 {
            return Err(Error::Precondition(alloc::format!(
                "nx and nt must be >= 16, got {} and {}",
                self.nx,
                self.nt
            )));
        }
        if !(self.x_max > self.x_min) || !(self.horizon > 0.0) {
            return Err(Error::Precondition("empty PDE domain".into()));
        }
        if let Some(n) = spec.support_radius() {
            let need = 2.0 * (n + 4.0 * sqrt(self.horizon));
            if self.x_max - self.x_min < need * (1.0 - 1e-12) {
                return Err(Error::Precondition(alloc::format!(
                    "domain width {} below 2(N + 4 sqrt T) = {need}",
                    self.x_max - self.x_min
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZvonkinSolution {
    pub grid: PdeGrid,
    pub lambda: f64,
    /// `U(t_k, x_i)` at `k * nx + i`, `t_k = k T / nt`.
    pub u: Vec<f64>,
    /// Central differences of `U` (zero at the Neumann ends).
    pub du: Vec<f64>,
    /// `max |U(t, x_{i+1}) - U(t, x_i)| / Δx` over all grid cells and times.
    pub grad_sup: f64,
    pub max_abs_u: f64,
    /// Largest relative residual of the tridiagonal solves.
    pub solver_residual: f64,
    pub b_spec: DriftSpec,
}

/// Solves `a_i y_{i-1} + d_i y_i + c_i y_{i+1} = r_i`.
fn thomas(a: &[f64], d: &[f64], c: &[f64], r: &[f64], out: &mut [f64], cp: &mut [f64]) {
    let n = d.len();
    cp[0] = c[0] / d[0];
    out[0] = r[0] / d[0];
    for i in 1..n {
        let m = d[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        out[i] = (r[i] - a[i] * out[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        out[i] -= cp[i] * out[i + 1];
    }
}

fn cell_average(spec: &DriftSpec, t: f64, x: f64, h: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..CELL_SAMPLES {
        let off = ((k as f64 + 0.5) / CELL_SAMPLES as f64 - 0.5) * h;
        acc += spec.eval1(t, x + off);
    }
    acc / CELL_SAMPLES as f64
}

/// Crank–Nicolson solution for a given `λ`.
pub fn solve_backward_pde(spec: &DriftSpec, lambda: f64, grid: PdeGrid) -> Result<ZvonkinSolution> {
    if spec.dim != 1 {
        return Err(Error::UnsupportedDimension {
            expected: 1,
            got: spec.dim,
        });
    }
    if !spec.bound().is_finite() {
        return Err(Error::Precondition("drift must be bounded".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Precondition(alloc::format!("lambda must be > 0, got {lambda}")));
    }
    grid.check(spec)?;
    let nx = grid.nx;
    let nt = grid.nt;
    let h = grid.dx();
    let k = grid.dt();
    let xs: Vec<f64> = (0..nx).map(|i| grid.x(i)).collect();

    let mut u = vec![0.0; (nt + 1) * nx];
    let mut v = vec![0.0; nx];
    let mut next = vec![0.0; nx];
    let mut bvals = vec![0.0; nx];
    let (mut lo, mut di, mut up, mut rhs, mut cp) =
        (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
    let mut worst_residual: f64 = 0.0;
    let diff = 0.5 / (h * h);
    for step in 0..nt {
        // March from t_{nt-step} to t_{nt-step-1}.
        let t_mid = grid.horizon - (step as f64 + 0.5) * k;
        for i in 0..nx {
            bvals[i] = cell_average(spec, t_mid, xs[i], h);
        }
        for i in 0..nx {
            // L v = ½ v_xx + b v_x - λ v with ghost v_{-1} = v_1, v_{nx} = v_{nx-2}.
            let (wl, wr) = if i == 0 {
                (0.0, 2.0 * diff)
            } else if i == nx - 1 {
                (2.0 * diff, 0.0)
            } else {
                let adv = bvals[i] / (2.0 * h);
                (diff - adv, diff + adv)
            };
            let wc = -2.0 * diff - lambda;
            let vl = if i > 0 { v[i - 1] } else { 0.0 };
            let vr = if i + 1 < nx { v[i + 1] } else { 0.0 };
            let lv = wl * vl + wc * v[i] + wr * vr;
            rhs[i] = v[i] + 0.5 * k * lv + k * bvals[i];
            lo[i] = -0.5 * k * wl;
            di[i] = 1.0 - 0.5 * k * wc;
            up[i] = -0.5 * k * wr;
        }
        thomas(&lo, &di, &up, &rhs, &mut next, &mut cp);
        let mut res: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for i in 0..nx {
            let mut r = di[i] * next[i] - rhs[i];
            if i > 0 {
                r += lo[i] * next[i - 1];
            }
            if i + 1 < nx {
                r += up[i] * next[i + 1];
            }
            res = res.max(r.abs());
            scale = scale.max(rhs[i].abs());
        }
        let rel = res / scale;
        if !(rel <= 1e-9) {
            return Err(Error::Solver { residual: rel });
        }
        worst_residual = worst_residual.max(rel);
        core::mem::swap(&mut v, &mut next);
        let row = nt - step - 1;
        u[row * nx..(row + 1) * nx].copy_from_slice(&v);
    }

    let mut du = vec![0.0; (nt + 1) * nx];
    let mut grad_sup: f64 = 0.0;
    let mut max_abs_u: f64 = 0.0;
    for row in 0..=nt {
        let r = &u[row * nx..(row + 1) * nx];
        for i in 0..nx {
            max_abs_u = max_abs_u.max(r[i].abs());
            if i + 1 < nx {
                grad_sup = grad_sup.max((r[i + 1] - r[i]).abs() / h);
            }
            if i > 0 && i + 1 < nx {
                du[row * nx + i] = (r[i + 1] - r[i - 1]) / (2.0 * h);
            }
        }
    }
    Ok(ZvonkinSolution {
        grid,
        lambda,
        u,
        du,
        grad_sup,
        max_abs_u,
        solver_residual: worst_residual,
        b_spec: spec.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearch {
    pub lambda: f64,
    pub solution: ZvonkinSolution,
    /// `(λ, grad_sup)` for every solve, doubling phase first.
    pub sweep: Vec<(f64, f64)>,
}

pub const LAMBDA_START: f64 = 1.0;
const BISECTION_STEPS: usize = 10;

/// Doubling search from [`LAMBDA_START`], then bisection, for the smallest
/// tested `λ` with `grad_sup ≤ target`.
pub fn find_lambda(spec: &DriftSpec, grid: PdeGrid, target: f64) -> Result<LambdaSearch> {
    let mut sweep = Vec::new();
    let mut lambda = LAMBDA_START;
    let mut sol = solve_backward_pde(spec, lambda, grid)?;
    sweep.push((lambda, sol.grad_sup));
    if sol.grad_sup <= target {
        return Ok(LambdaSearch {
            lambda,
            solution: sol,
            sweep,
        });
    }
    let mut below;
    loop {
        below = lambda;
        lambda *= 2.0;
        if lambda > LAMBDA_MAX {
            return Err(Error::SearchFailure {
                lambda: below,
                grad_sup: sol.grad_sup,
                target,
            });
        }
        sol = solve_backward_pde(spec, lambda, grid)?;
        sweep.push((lambda, sol.grad_sup));
        if sol.grad_sup <= target {
            break;
        }
    }
    let (mut lo, mut hi) = (below, lambda);
    let mut best = sol;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let s = solve_backward_pde(spec, mid, grid)?;
        sweep.push((mid, s.grad_sup));
        if s.grad_sup <= target {
            hi = mid;
            best = s;
        } else {
            lo = mid;
        }
    }
    Ok(LambdaSearch {
        lambda: hi,
        solution: best,
        sweep,
    })
}

impl ZvonkinSolution {
    pub fn accepted(&self, target: f64) -> bool {
        self.grad_sup <= target
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.u[k * self.grid.nx..(k + 1) * self.grid.nx]
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if !(x >= self.grid.x_min && x <= self.grid.x_max) {
            return Err(Error::Extrapolation {
                x,
                lo: self.grid.x_min,
                hi: self.grid.x_max,
            });
        }
        Ok(())
    }

    /// Time row index and weight for linear interpolation in `t`.
    fn time_weights(&self, t: f64) -> (usize, f64) {
        let s = (t / self.grid.dt()).clamp(0.0, self.grid.nt as f64);
        let k = (s as usize).min(self.grid.nt - 1);
        (k, s - k as f64)
    }

    fn space_weights(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.grid.x_min) / self.grid.dx()).clamp(0.0, (self.grid.nx - 1) as f64);
        let i = (s as usize).min(self.grid.nx - 2);
        (i, s - i as f64)
    }

    fn bilinear(&self, field: &[f64], t: f64, x: f64) -> f64 {
        let nx = self.grid.nx;
        let (k, wt) = self.time_weights(t);
        let (i, wx) = self.space_weights(x);
        let at = |kk: usize| {
            let r = &field[kk * nx..];
            r[i] + wx * (r[i + 1] - r[i])
        };
        let a = at(k);
        if wt == 0.0 {
            a
        } else {
            a + wt * (at(k + 1) - a)
        }
    }

    /// `U(t, x)`, bilinear in `(t, x)`.
    pub fn u_at(&self, t: f64, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.bilinear(&self.u, t, x))
    }

    /// `∂U/∂x (t, x)` from the central differences, bilinear in `(t, x)`.
    pub fn du_at(&self, t: f64, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.bilinear(&self.du, t, x))
    }

    /// `ψ_t(x) = x + U(t, x)`.
    pub fn psi(&self, t: f64, x: f64) -> Result<f64> {
        Ok(x + self.u_at(t, x)?)
    }

    /// `ψ_t(x_j)` at vertex `j`, with `ψ_t` interpolated between time rows.
    #[inline]
    fn knot(&self, k: usize, wt: f64, j: usize) -> f64 {
        let nx = self.grid.nx;
        let a = self.u[k * nx + j];
        let u = if wt == 0.0 { a } else { a + wt * (self.u[(k + 1) * nx + j] - a) };
        self.grid.x(j) + u
    }

    /// `ψ_t^{-1}(y)`. `ψ_t` is piecewise linear in `x` between vertices and
    /// increasing, so a binary search over the vertex images locates the
    /// cell and the inverse there is an exact linear solve.
    pub fn psi_inverse(&self, t: f64, y: f64) -> Result<f64> {
        let (k, wt) = self.time_weights(t);
        let n = self.grid.nx;
        let (lo_y, hi_y) = (self.knot(k, wt, 0), self.knot(k, wt, n - 1));
        if !(y >= lo_y && y <= hi_y) {
            return Err(Error::Extrapolation { x: y, lo: lo_y, hi: hi_y });
        }
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knot(k, wt, mid) <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (y0, y1) = (self.knot(k, wt, lo), self.knot(k, wt, hi));
        let (x0, x1) = (self.grid.x(lo), self.grid.x(hi));
        if y1 > y0 {
            Ok(x0 + (y - y0) * ((x1 - x0) / (y1 - y0)))
        } else {
            Ok(x0)
        }
    }

    /// Range `[ψ_t(x_min), ψ_t(x_max)]` of `ψ_t`.
    pub fn y_range(&self, t: f64) -> (f64, f64) {
        let (k, wt) = self.time_weights(t);
        (self.knot(k, wt, 0), self.knot(k, wt, self.grid.nx - 1))
    }

    pub fn transformed(&self) -> Transformed<'_> {
        Transformed { sol: self }
    }

    /// Minimum slope of `ψ_{t_k}` over all grid cells and time rows.
    pub fn min_psi_slope(&self) -> f64 {
        let h = self.grid.dx();
        let mut m = f64::INFINITY;
        for k in 0..=self.grid.nt {
            let r = self.row(k);
            for i in 0..self.grid.nx - 1 {
                m = m.min(1.0 + (r[i + 1] - r[i]) / h);
            }
        }
        m
    }

    /// Diagnostic Hölder fit of `∂U/∂x(0, ·)`: slope of
    /// `log max_i |dU(x_{i+s}) - dU(x_i)|` against `log(s Δx)`.
    pub fn gradient_hoelder_fit(&self) -> Option<stats::LineFit> {
        let r = &self.du[..self.grid.nx];
        let h = self.grid.dx();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut s = 1;
        while s < self.grid.nx / 4 {
            let mut m: f64 = 0.0;
            for i in 1..self.grid.nx - 1 - s {
                m = m.max((r[i + s] - r[i]).abs());
            }
            if m > 0.0 {
                xs.push(log(s as f64 * h));
                ys.push(log(m));
            }
            s *= 2;
        }
        stats::line_fit(&xs, &ys)
    }
}

/// `b̃(t, y) = λ U(t, ψ_t^{-1}(y))`, `σ̃(t, y) = 1 + ∂U/∂x(t, ψ_t^{-1}(y))`.
#[derive(Debug, Clone, Copy)]
pub struct Transformed<'a> {
    pub sol: &'a ZvonkinSolution,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    pub b_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Finite-difference Lipschitz estimates in `y` on the vertex images.
    pub b_lipschitz: f64,
    pub sigma_lipschitz: f64,
}

impl<'a> Transformed<'a> {
    pub fn coefficients(&self, t: f64, y: f64) -> Result<(f64, f64)> {
        let x = self.sol.psi_inverse(t, y)?;
        Ok((
            self.sol.lambda * self.sol.bilinear(&self.sol.u, t, x),
            1.0 + self.sol.bilinear(&self.sol.du, t, x),
        ))
    }

    pub fn b_tilde(&self, t: f64, y: f64) -> Result<f64> {
        Ok(self.coefficients(t, y)?.0)
    }

    pub fn sigma_tilde(&self, t: f64, y: f64) -> Result<f64> {
        Ok(self.coefficients(t, y)?.1)
    }

    pub fn bounds(&self) -> CoefficientBounds {
        let sol = self.sol;
        let nx = sol.grid.nx;
        let h = sol.grid.dx();
        let mut out = CoefficientBounds {
            b_max: 0.0,
            sigma_min: f64::INFINITY,
            sigma_max: f64::NEG_INFINITY,
            b_lipschitz: 0.0,
            sigma_lipschitz: 0.0,
        };
        for k in 0..=sol.grid.nt {
            let u = sol.row(k);
            let du = &sol.du[k * nx..(k + 1) * nx];
            for i in 0..nx {
                out.b_max = out.b_max.max(sol.lambda * u[i].abs());
                out.sigma_min = out.sigma_min.min(1.0 + du[i]);
                out.sigma_max = out.sigma_max.max(1.0 + du[i]);
                if i + 1 < nx {
                    let dy = h + u[i + 1] - u[i];
                    out.b_lipschitz = out.b_lipschitz.max(sol.lambda * (u[i + 1] - u[i]).abs() / dy);
                    out.sigma_lipschitz = out.sigma_lipschitz.max((du[i + 1] - du[i]).abs() / dy);
                }
            }
        }
        out
    }
}

/// Closed form for spatially constant `b ≡ c`:
/// `U(t) = (c/λ)(1 - e^{λ(t - T)})`.
pub fn constant_drift_solution(c: f64, lambda: f64, t: f64, horizon: f64) -> f64 {
    c / lambda * (1.0 - exp(lambda * (t - horizon)))
}

/// Max-principle bound `‖b‖_∞ (1 - e^{-λT}) / λ`.
pub fn max_principle_bound(bound: f64, lambda: f64, horizon: f64) -> f64 {
    bound / lambda * (1.0 - exp(-lambda * horizon))
}

/// Error ratio `max|U_h - U_{h/2}| / max|U_{h/2} - U_{h/4}|` at the coarse
/// vertices and times.
pub fn self_convergence_ratio(spec: &DriftSpec, lambda: f64, grid: PdeGrid) -> Result<f64> {
    let g1 = grid.refined();
    let g2 = g1.refined();
    let s0 = solve_backward_pde(spec, lambda, grid)?;
    let s1 = solve_backward_pde(spec, lambda, g1)?;
    let s2 = solve_backward_pde(spec, lambda, g2)?;
    let mut e0: f64 = 0.0;
    let mut e1: f64 = 0.0;
    for k in 0..=grid.nt {
        for i in 0..grid.nx {
            let a = s0.u[k * grid.nx + i];
            let b = s1.u[(2 * k) * g1.nx + 2 * i];
            let c = s2.u[(4 * k) * g2.nx + 4 * i];
            e0 = e0.max((a - b).abs());
            e1 = e1.max((b - c).abs());
        }
    }
    Ok(e0 / e1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{catalog, DriftSpec};
    use crate::rng::uniform_at;
    use proptest::prelude::*;

    fn spec(id: &str) -> DriftSpec {
        DriftSpec::parse(id).unwrap()
    }

    fn grid(s: &DriftSpec, nx: usize, nt: usize) -> PdeGrid {
        PdeGrid::for_drift(s, nx, nt)
    }

    #[test]
    fn zero_drift_gives_zero_solution() {
        let b = spec("zero");
        let s = solve_backward_pde(&b, 1.0, grid(&b, 64, 64)).unwrap();
        assert!(s.u.iter().all(|v| *v == 0.0));
        assert_eq!(s.grad_sup, 0.0);
        let f = find_lambda(&b, grid(&b, 64, 64), 0.5).unwrap();
        assert_eq!(f.lambda, LAMBDA_START);
    }

    #[test]
    fn constant_drift_matches_closed_form() {
        let b = spec("const:c=0.7");
        let g = grid(&b, 256, 512);
        let s = solve_backward_pde(&b, 1.0, g).unwrap();
        for k in 0..=g.nt {
            let exact = constant_drift_solution(0.7, 1.0, g.t(k), 1.0);
            for &v in s.row(k) {
                assert!((v - exact).abs() < 1e-6, "{v} {exact}");
            }
        }
        assert!(s.grad_sup < 1e-12);
        assert_eq!(find_lambda(&b, g, 0.5).unwrap().lambda, LAMBDA_START);
    }

    #[test]
    fn terminal_condition_is_exact() {
        let b = spec("checkerboard:cell=0.1");
        let s = solve_backward_pde(&b, 3.0, grid(&b, 128, 64)).unwrap();
        assert!(s.row(s.grid.nt).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn second_order_self_convergence() {
        let b = spec("sin");
        let r = self_convergence_ratio(&b, 2.0, grid(&b, 65, 32)).unwrap();
        assert!((3.0..=5.0).contains(&r), "{r}");
    }

    #[test]
    fn grad_sup_decreases_along_doubling() {
        let b = spec("sin");
        let g = grid(&b, 256, 256);
        let mut prev = f64::INFINITY;
        let mut lam = 0.25;
        while lam <= 64.0 {
            let s = solve_backward_pde(&b, lam, g).unwrap();
            assert!(s.grad_sup <= prev);
            prev = s.grad_sup;
            lam *= 2.0;
        }
    }

    #[test]
    fn maximum_principle() {
        for id in ["const:c=0.5", "sin:amp=0.2", "bump:amp=0.3"] {
            let b = spec(id);
            for lam in [1.0, 5.0] {
                let s = solve_backward_pde(&b, lam, grid(&b, 256, 256)).unwrap();
                assert!(s.max_abs_u <= max_principle_bound(b.bound(), lam, 1.0) + 1e-3, "{id}");
            }
        }
    }

    #[test]
    fn lambda_search_succeeds_on_the_catalog() {
        for b in catalog() {
            let f = find_lambda(&b, grid(&b, 128, 128), 0.5).unwrap();
            assert!(f.solution.grad_sup <= 0.5, "{b}");
            assert!(f.solution.min_psi_slope() >= 0.5);
        }
    }

    #[test]
    fn unsupported_dimension_and_small_grids() {
        let b = spec("sin").with_dim(2);
        assert!(matches!(
            solve_backward_pde(&b, 1.0, PdeGrid::new(-8.0, 8.0, 64, 64, 1.0)),
            Err(Error::UnsupportedDimension { .. })
        ));
        let b = spec("sin");
        assert!(solve_backward_pde(&b, 1.0, PdeGrid::new(-8.0, 8.0, 8, 64, 1.0)).is_err());
        let t = spec("sin@N=4");
        assert!(solve_backward_pde(&t, 1.0, PdeGrid::new(-5.0, 5.0, 64, 64, 1.0)).is_err());
    }

    #[test]
    fn psi_round_trip_and_lipschitz() {
        let b = spec("checkerboard:cell=0.1");
        let f = find_lambda(&b, grid(&b, 256, 128), 0.5).unwrap();
        let s = &f.solution;
        for i in 0..1000u64 {
            let t = uniform_at(&[1, i]);
            let x = -6.0 + 12.0 * uniform_at(&[2, i]);
            let y = -6.0 + 12.0 * uniform_at(&[3, i]);
            let px = s.psi(t, x).unwrap();
            assert!((s.psi_inverse(t, px).unwrap() - x).abs() < 1e-8);
            let py = s.psi(t, y).unwrap();
            if x != y {
                let ratio = (px - py).abs() / (x - y).abs();
                assert!(ratio <= 1.5 + 1e-12 && ratio >= 0.5 - 1e-12, "{ratio}");
            }
        }
        assert!(s.psi(0.0, 100.0).is_err());
        assert!(s.psi_inverse(0.0, 100.0).is_err());
    }

    #[test]
    fn zero_drift_transform_is_trivial() {
        let b = spec("zero");
        let s = solve_backward_pde(&b, 1.0, grid(&b, 64, 64)).unwrap();
        assert_eq!(s.psi(0.3, 1.25).unwrap(), 1.25);
        assert_eq!(s.psi_inverse(0.3, 1.25).unwrap(), 1.25);
        assert_eq!(s.transformed().coefficients(0.3, 1.25).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn transformed_sigma_is_near_one() {
        for b in catalog() {
            let f = find_lambda(&b, grid(&b, 128, 64), 0.5).unwrap();
            let tr = f.solution.transformed();
            let bounds = tr.bounds();
            assert!(bounds.sigma_min >= 0.5 && bounds.sigma_max <= 1.5, "{b}");
            assert!(bounds.b_max <= f.lambda * f.solution.max_abs_u + 1e-12);
            for i in 0..200u64 {
                let t = uniform_at(&[5, i]);
                let (lo, hi) = f.solution.y_range(t);
                let y = lo + (hi - lo) * uniform_at(&[6, i]);
                let (bt, st) = tr.coefficients(t, y).unwrap();
                assert!((0.5..=1.5).contains(&st));
                assert!(bt.abs() <= bounds.b_max + 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn psi_is_monotone(t in 0.0f64..1.0, x in -5.0f64..5.0, dx in 1e-6f64..1.0) {
            let b = spec("signosc");
            let f = find_lambda(&b, grid(&b, 128, 64), 0.5).unwrap();
            let a = f.solution.psi(t, x).unwrap();
            let c = f.solution.psi(t, x + dx).unwrap();
            prop_assert!(c - a >= 0.5 * dx - 1e-12);
        }
    }
}
