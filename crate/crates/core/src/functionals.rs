//! Functionals of `(b, W, h)`: derivative integrals, covariation estimators
//! and their time-reversal decomposition, shifted drift integrals
//! `φ(h, W) = ∫_r^u b(s, W_s + h(s)) ds`, and occupation times.
//!
//! Scalar functionals act on the first coordinate. Time integrals of
//! bounded integrands use the midpoint rule on each grid cell, with `W` at
//! the midpoint taken from the linear skeleton. Stochastic integrals are
//! left-endpoint sums.

use alloc::vec;
use alloc::vec::Vec;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::paths::{time_reverse, BrownianPath, TimeWindow};

/// A time-dependent shift `h : [r, u] → R^d`.
pub trait Perturbation {
    fn window(&self) -> TimeWindow;
    fn eval_into(&self, t: f64, out: &mut [f64]);

    /// Interior times where `h` may fail to be affine, when `h` is
    /// piecewise linear. `None` means unknown.
    fn breakpoints(&self) -> Option<Vec<f64>> {
        None
    }
}

/// `‖h₁ - h₂‖_∞` over the common window (max-norm over coordinates).
/// Exact for piecewise-linear shifts reporting their breakpoints, otherwise
/// evaluated on a 4097-point mesh.
pub fn sup_distance<P: Perturbation + ?Sized, Q: Perturbation + ?Sized>(h1: &P, h2: &Q, dim: usize) -> f64 {
    let w = h1.window();
    let mut ts = match (h1.breakpoints(), h2.breakpoints()) {
        (Some(mut a), Some(b)) => {
            a.extend(b);
            a
        }
        _ => (0..=4096).map(|i| w.r + w.len() * i as f64 / 4096.0).collect(),
    };
    ts.push(w.r);
    ts.push(w.u);
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    let mut sup: f64 = 0.0;
    for t in ts {
        if t < w.r || t > w.u {
            continue;
        }
        h1.eval_into(t, &mut a);
        h2.eval_into(t, &mut b);
        for c in 0..dim {
            sup = sup.max((a[c] - b[c]).abs());
        }
    }
    sup
}

/// `h(t) = value` on `window`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantShift {
    pub window: TimeWindow,
    pub value: Vec<f64>,
}

impl ConstantShift {
    pub fn new(window: TimeWindow, value: Vec<f64>) -> Self {
        Self { window, value }
    }

    pub fn zero(window: TimeWindow, dim: usize) -> Self {
        Self::new(window, vec![0.0; dim])
    }
}

impl Perturbation for ConstantShift {
    fn window(&self) -> TimeWindow {
        self.window
    }

    fn eval_into(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }

    fn breakpoints(&self) -> Option<Vec<f64>> {
        Some(Vec::new())
    }
}

/// Shift given by a closure `f(t, out)`.
pub struct ShiftFn<F> {
    pub window: TimeWindow,
    pub f: F,
}

impl<F: Fn(f64, &mut [f64])> Perturbation for ShiftFn<F> {
    fn window(&self) -> TimeWindow {
        self.window
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.f)(t, out)
    }
}

/// Pairwise summation. Sums of `2^k` equal dyadic-friendly terms are exact.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let h = n.next_power_of_two() / 2;
            pairwise_sum(&xs[..h]) + pairwise_sum(&xs[h..])
        }
    }
}

fn require_unit(path: &BrownianPath) -> Result<()> {
    if path.grid.horizon != 1.0 {
        return Err(Error::Precondition(alloc::format!(
            "unit horizon required, got {}",
            path.grid.horizon
        )));
    }
    Ok(())
}

fn first_component(spec: &DriftSpec, t: f64, x: &[f64], buf: &mut [f64]) -> f64 {
    if spec.dim == 1 {
        spec.eval1(t, x[0])
    } else {
        spec.eval_into(t, x, buf);
        buf[0]
    }
}

/// `∫₀¹ ∂b₁/∂x₁(t, W_t) dt` by the trapezoid rule on grid nodes.
pub fn derivative_integral(spec: &DriftSpec, path: &BrownianPath) -> Result<f64> {
    require_unit(path)?;
    if !spec.is_smooth() {
        return Err(Error::UnsupportedFamily {
            family: spec.family_name(),
        });
    }
    let n = path.grid.cells();
    let mut vals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = path.grid.time(i);
        let d = spec.derivative1(t, path.x(i)).unwrap_or(0.0);
        vals.push(if i == 0 || i == n { 0.5 * d } else { d });
    }
    Ok(pairwise_sum(&vals) * path.grid.dt())
}

/// `Σ (Z_{t_{i+1}} - Z_{t_i})(W_{t_{i+1}} - W_{t_i})` with `Z_t = b(t, W_t)`.
pub fn covariation_partition(spec: &DriftSpec, path: &BrownianPath) -> Result<f64> {
    require_unit(path)?;
    let n = path.grid.cells();
    let mut buf = vec![0.0; spec.dim];
    let mut z_prev = first_component(spec, 0.0, path.point(0), &mut buf);
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let z = first_component(spec, path.grid.time(i + 1), path.point(i + 1), &mut buf);
        terms.push((z - z_prev) * (path.x(i + 1) - path.x(i)));
        z_prev = z;
    }
    Ok(pairwise_sum(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariationReport {
    /// `∫ b'_x(t, W_t) dt`; `None` for non-smooth drifts.
    pub derivative_integral: Option<f64>,
    pub partition_sum: f64,
    /// `-∫ b(1-t, W̃_t) dB_t`.
    pub i1: f64,
    /// `∫ W̃_t b(1-t, W̃_t) / (1-t) dt`, quadrature shared with `B`.
    pub i2: f64,
    /// `-∫ b(t, W_t) dW_t`.
    pub i3: f64,
    /// `|I₁ + I₂ + I₃ - ∫ b'_x dt|`; `None` for non-smooth drifts.
    pub residual: Option<f64>,
    /// `|I₁ + I₂ + I₃ - partition_sum|` (summation rounding only).
    pub algebraic_gap: f64,
    /// Contribution of the last cell (`t ∈ [1-Δt, 1]`) to `I₂`.
    pub i2_last_cell: f64,
    /// `‖b‖_∞ · |W̃_1 - W̃_{1-Δt}|`, a bound on `|i2_last_cell|`.
    pub i2_last_cell_bound: f64,
}

/// The decomposition of the covariation through the time-reversed motion
/// `W̃_t = W_{1-t}` and its driving noise `B`.
///
/// With the orientation used here the partition sum splits as
/// `Σ Z_{i+1} ΔW_i - Σ Z_i ΔW_i`; the first sum, read backward in time, is
/// `-Σ b(1-s_j, W̃_j) ΔW̃_j`, and `ΔW̃_j = ΔB_j - q_j` with `q_j` the cell
/// integral of `W̃_s/(1-s)`. Hence `I₁ + I₂ + I₃` equals the partition sum
/// up to rounding at every level.
pub fn covariation_decomposition(spec: &DriftSpec, path: &BrownianPath) -> Result<CovariationReport> {
    require_unit(path)?;
    if path.grid.level < 10 {
        return Err(Error::Precondition(alloc::format!(
            "decomposition needs level >= 10, got {}",
            path.grid.level
        )));
    }
    let rev = time_reverse(path)?;
    let n = path.grid.cells();
    let dim = path.dim;
    let mut buf = vec![0.0; spec.dim];
    let mut t1 = Vec::with_capacity(n);
    let mut t2 = Vec::with_capacity(n);
    let mut t3 = Vec::with_capacity(n);
    let mut last = 0.0;
    for j in 0..n {
        let tb = path.grid.time(n - j);
        let bz = first_component(spec, tb, rev.reversed.point(j), &mut buf);
        let db = rev.noise[(j + 1) * dim] - rev.noise[j * dim];
        t1.push(-bz * db);
        let q = rev.drift_cells[j * dim];
        t2.push(bz * q);
        if j + 1 == n {
            last = bz * q;
        }
        let z = first_component(spec, path.grid.time(j), path.point(j), &mut buf);
        t3.push(-z * (path.x(j + 1) - path.x(j)));
    }
    let i1 = pairwise_sum(&t1);
    let i2 = pairwise_sum(&t2);
    let i3 = pairwise_sum(&t3);
    let partition_sum = covariation_partition(spec, path)?;
    let derivative = if spec.is_smooth() {
        Some(derivative_integral(spec, path)?)
    } else {
        None
    };
    let total = i1 + i2 + i3;
    let w_last = (rev.reversed.x(n) - rev.reversed.x(n - 1)).abs();
    Ok(CovariationReport {
        derivative_integral: derivative,
        partition_sum,
        i1,
        i2,
        i3,
        residual: derivative.map(|d| (total - d).abs()),
        algebraic_gap: (total - partition_sum).abs(),
        i2_last_cell: last,
        i2_last_cell_bound: spec.bound() * w_last,
    })
}

fn window_indices(path: &BrownianPath, window: TimeWindow) -> Result<(usize, usize)> {
    let err = || Error::Alignment {
        r: window.r,
        u: window.u,
    };
    let a = path.grid.index_of(window.r).ok_or_else(err)?;
    let b = path.grid.index_of(window.u).ok_or_else(err)?;
    if b <= a {
        return Err(err());
    }
    Ok((a, b))
}

/// Midpoint rule for `∫_r^u f(s, W_s + h(s)) ds` (vector valued, `dim`
/// components written by `f`).
pub fn shifted_integral_with<P, F>(path: &BrownianPath, h: &P, dim: usize, mut f: F) -> Result<Vec<f64>>
where
    P: Perturbation + ?Sized,
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (a, b) = window_indices(path, h.window())?;
    let d = path.dim;
    let dt = path.grid.dt();
    let cells = b - a;
    let mut terms = vec![0.0; dim * cells];
    let mut x = vec![0.0; d];
    let mut shift = vec![0.0; d];
    let mut val = vec![0.0; dim];
    for (k, i) in (a..b).enumerate() {
        let t = 0.5 * (path.grid.time(i) + path.grid.time(i + 1));
        h.eval_into(t, &mut shift);
        let p0 = path.point(i);
        let p1 = path.point(i + 1);
        for c in 0..d {
            x[c] = 0.5 * (p0[c] + p1[c]) + shift[c];
        }
        f(t, &x, &mut val);
        for c in 0..dim {
            terms[c * cells + k] = val[c];
        }
    }
    Ok((0..dim)
        .map(|c| pairwise_sum(&terms[c * cells..(c + 1) * cells]) * dt)
        .collect())
}

/// `φ(h, W) = ∫_r^u b(s, W_s + h(s)) ds` over the window of `h`.
pub fn shifted_drift_integral<P: Perturbation + ?Sized>(
    spec: &DriftSpec,
    path: &BrownianPath,
    h: &P,
) -> Result<Vec<f64>> {
    if spec.dim != path.dim {
        return Err(Error::UnsupportedDimension {
            expected: spec.dim,
            got: path.dim,
        });
    }
    shifted_integral_with(path, h, spec.dim, |t, x, out| spec.eval_into(t, x, out))
}

/// `φ(h₁, W) - φ(h₂, W)` (first coordinate) with the two integrands
/// differenced cell by cell on the same path.
pub fn shifted_drift_difference<P, Q>(spec: &DriftSpec, path: &BrownianPath, h1: &P, h2: &Q) -> Result<f64>
where
    P: Perturbation + ?Sized,
    Q: Perturbation + ?Sized,
{
    if h1.window() != h2.window() {
        return Err(Error::Precondition("h1 and h2 must share a window".into()));
    }
    let (a, b) = window_indices(path, h1.window())?;
    let d = path.dim;
    let mut w = vec![0.0; d];
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut v1 = vec![0.0; spec.dim];
    let mut v2 = vec![0.0; spec.dim];
    let mut terms = Vec::with_capacity(b - a);
    for i in a..b {
        let t = 0.5 * (path.grid.time(i) + path.grid.time(i + 1));
        h1.eval_into(t, &mut s1);
        h2.eval_into(t, &mut s2);
        let p0 = path.point(i);
        let p1 = path.point(i + 1);
        for c in 0..d {
            w[c] = 0.5 * (p0[c] + p1[c]);
            x[c] = w[c] + s1[c];
        }
        spec.eval_into(t, &x, &mut v1);
        for c in 0..d {
            x[c] = w[c] + s2[c];
        }
        spec.eval_into(t, &x, &mut v2);
        terms.push(v1[0] - v2[0]);
    }
    Ok(pairwise_sum(&terms) * path.grid.dt())
}

/// Open axis-aligned box `(t0, t1) × Π (lo_j, hi_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenBox {
    pub t0: f64,
    pub t1: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl OpenBox {
    pub fn new(t0: f64, t1: f64, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { t0, t1, lo, hi }
    }

    /// One-dimensional box `(t0, t1) × (x0, x1)`.
    pub fn interval(t0: f64, t1: f64, x0: f64, x1: f64) -> Self {
        Self::new(t0, t1, vec![x0], vec![x1])
    }

    #[inline]
    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        self.t0 < t
            && t < self.t1
            && x.iter().zip(&self.lo).zip(&self.hi).all(|((v, lo), hi)| lo < v && v < hi)
    }

    pub fn volume(&self) -> f64 {
        let mut v = (self.t1 - self.t0).max(0.0);
        for (lo, hi) in self.lo.iter().zip(&self.hi) {
            v *= (hi - lo).max(0.0);
        }
        v
    }

    fn intersect(&self, other: &OpenBox) -> OpenBox {
        OpenBox {
            t0: self.t0.max(other.t0),
            t1: self.t1.min(other.t1),
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect(),
        }
    }

    fn edges(&self, axis: usize) -> (f64, f64) {
        if axis == 0 {
            (self.t0, self.t1)
        } else {
            (self.lo[axis - 1], self.hi[axis - 1])
        }
    }
}

/// A finite union of open boxes in `[0, 1] × R^d`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpenSetSpec {
    pub boxes: Vec<OpenBox>,
}

/// Largest box count for which [`OpenSetSpec::inclusion_exclusion`] runs.
pub const INCLUSION_EXCLUSION_MAX: usize = 20;

impl OpenSetSpec {
    pub fn new(boxes: Vec<OpenBox>) -> Self {
        Self { boxes }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_intervals(boxes: &[[f64; 4]]) -> Self {
        Self::new(boxes.iter().map(|b| OpenBox::interval(b[0], b[1], b[2], b[3])).collect())
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(t, x))
    }

    /// Lebesgue measure of the union by coordinate compression.
    pub fn measure(&self) -> f64 {
        let Some(first) = self.boxes.first() else {
            return 0.0;
        };
        let axes = first.lo.len() + 1;
        let cuts: Vec<Vec<f64>> = (0..axes)
            .map(|a| {
                let mut v: Vec<f64> = self
                    .boxes
                    .iter()
                    .flat_map(|b| {
                        let (lo, hi) = b.edges(a);
                        [lo, hi]
                    })
                    .collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        let mut idx = vec![0usize; axes];
        let mut total = 0.0;
        if cuts.iter().any(|c| c.len() < 2) {
            return 0.0;
        }
        loop {
            let mut vol = 1.0;
            let mut centre = vec![0.0; axes];
            for a in 0..axes {
                let (lo, hi) = (cuts[a][idx[a]], cuts[a][idx[a] + 1]);
                vol *= hi - lo;
                centre[a] = 0.5 * (lo + hi);
            }
            if vol > 0.0 && self.contains(centre[0], &centre[1..]) {
                total += vol;
            }
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] + 1 < cuts[a].len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
                if a == axes {
                    return total;
                }
            }
        }
    }

    /// Measure by inclusion–exclusion over all subfamilies; `None` above
    /// [`INCLUSION_EXCLUSION_MAX`] boxes.
    pub fn inclusion_exclusion(&self) -> Option<f64> {
        let m = self.boxes.len();
        if m > INCLUSION_EXCLUSION_MAX {
            return None;
        }
        let mut total = 0.0;
        for mask in 1u32..(1u32 << m) {
            let mut it = (0..m).filter(|i| mask >> i & 1 == 1);
            let first = it.next().expect("non-empty mask");
            let mut acc = self.boxes[first].clone();
            for i in it {
                acc = acc.intersect(&self.boxes[i]);
            }
            let v = acc.volume();
            if mask.count_ones() % 2 == 1 {
                total += v;
            } else {
                total -= v;
            }
        }
        Some(total)
    }
}

/// `∫ 1_U(s, W_s + h(s)) ds` over the window of `h`, with one node per cell
/// at the cell midpoint.
pub fn occupation_time<P: Perturbation + ?Sized>(set: &OpenSetSpec, path: &BrownianPath, h: &P) -> Result<f64> {
    let (a, b) = window_indices(path, h.window())?;
    let d = path.dim;
    let mut x = vec![0.0; d];
    let mut shift = vec![0.0; d];
    let mut count = 0u64;
    for i in a..b {
        let t = 0.5 * (path.grid.time(i) + path.grid.time(i + 1));
        h.eval_into(t, &mut shift);
        let p0 = path.point(i);
        let p1 = path.point(i + 1);
        for c in 0..d {
            x[c] = 0.5 * (p0[c] + p1[c]) + shift[c];
        }
        if set.contains(t, &x) {
            count += 1;
        }
    }
    Ok(count as f64 * path.grid.dt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{refine, sample_path};
    use crate::stats;
    use proptest::prelude::*;

    fn spec(id: &str) -> DriftSpec {
        DriftSpec::parse(id).unwrap()
    }

    fn unit() -> TimeWindow {
        TimeWindow::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn derivative_integral_degenerate_cases() {
        for level in [3, 8, 11] {
            let p = sample_path(level, 1, 1.0, 3, 0).unwrap();
            assert_eq!(derivative_integral(&spec("linear"), &p).unwrap(), 1.0);
            assert_eq!(derivative_integral(&spec("const:c=0.7"), &p).unwrap(), 0.0);
        }
        let p = sample_path(4, 1, 1.0, 3, 0).unwrap();
        assert!(derivative_integral(&spec("checkerboard"), &p).is_err());
    }

    #[test]
    fn derivative_integral_is_refinement_stable() {
        let b = spec("sin");
        for trial in 0..100 {
            let mut p = sample_path(14, 1, 1.0, 11, trial).unwrap();
            let coarse = derivative_integral(&b, &p).unwrap();
            for _ in 0..4 {
                p = refine(&p).unwrap();
            }
            let fine = derivative_integral(&b, &p).unwrap();
            assert!((coarse - fine).abs() < 1e-3, "{coarse} {fine}");
        }
    }

    #[test]
    fn partition_sum_of_linear_drift_is_the_quadratic_variation() {
        let b = spec("linear");
        let mut within = 0;
        for trial in 0..100 {
            let p = sample_path(14, 1, 1.0, 5, trial).unwrap();
            let qv: f64 = (0..p.grid.cells()).map(|i| (p.x(i + 1) - p.x(i)).powi(2)).sum();
            let s = covariation_partition(&b, &p).unwrap();
            assert!((s - qv).abs() < 1e-12);
            if (s - 1.0).abs() < 0.05 {
                within += 1;
            }
        }
        assert!(within >= 95, "{within}");
        let p = sample_path(10, 1, 1.0, 5, 0).unwrap();
        assert_eq!(covariation_partition(&spec("const:c=2"), &p).unwrap(), 0.0);
    }

    #[test]
    fn decomposition_of_zero_drift_vanishes() {
        let p = sample_path(10, 1, 1.0, 1, 0).unwrap();
        let r = covariation_decomposition(&spec("zero"), &p).unwrap();
        assert_eq!((r.i1, r.i2, r.i3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn decomposition_needs_level_ten() {
        let p = sample_path(9, 1, 1.0, 1, 0).unwrap();
        assert!(covariation_decomposition(&spec("sin"), &p).is_err());
    }

    #[test]
    fn decomposition_reproduces_partition_sum_and_derivative_integral() {
        for id in ["const:c=0.5", "sin"] {
            let b = spec(id);
            let mut ok = 0;
            for trial in 0..40 {
                let p = sample_path(16, 1, 1.0, 9, trial).unwrap();
                let r = covariation_decomposition(&b, &p).unwrap();
                assert!(r.algebraic_gap < 1e-9, "{}", r.algebraic_gap);
                assert!(r.i2_last_cell.abs() <= r.i2_last_cell_bound + 1e-15);
                if r.residual.unwrap() < 0.05 {
                    ok += 1;
                }
            }
            assert!(ok >= 38, "{id}: {ok}");
        }
    }

    #[test]
    fn constant_drift_integral_is_exact() {
        let p = sample_path(10, 1, 1.0, 2, 0).unwrap();
        let w = TimeWindow::new(0.25, 0.375).unwrap();
        let h = ConstantShift::zero(w, 1);
        let v = shifted_drift_integral(&spec("const:c=0.3"), &p, &h).unwrap();
        assert_eq!(v, vec![0.3 * 0.125]);
    }

    #[test]
    fn misaligned_window_is_rejected() {
        let p = sample_path(4, 1, 1.0, 2, 0).unwrap();
        let h = ConstantShift::zero(TimeWindow::new(0.1, 0.5).unwrap(), 1);
        assert!(matches!(
            shifted_drift_integral(&spec("sin"), &p, &h),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn checkerboard_shift_difference_is_bounded() {
        let b = spec("checkerboard:cell=0.1");
        let w = TimeWindow::new(0.5, 0.625).unwrap();
        for trial in 0..200 {
            let p = sample_path(12, 1, 1.0, 8, trial).unwrap();
            let a = shifted_drift_integral(&b, &p, &ConstantShift::zero(w, 1)).unwrap()[0];
            let c = shifted_drift_integral(&b, &p, &ConstantShift::new(w, vec![0.05])).unwrap()[0];
            assert!((a - c).abs() <= 2.0 * w.len());
        }
    }

    #[test]
    fn occupation_degenerate_cases() {
        let p = sample_path(10, 1, 1.0, 4, 0).unwrap();
        let h = ConstantShift::zero(unit(), 1);
        let all = OpenSetSpec::new(vec![OpenBox::interval(0.0, 1.0, -1e9, 1e9)]);
        assert_eq!(occupation_time(&all, &p, &h).unwrap(), 1.0);
        assert_eq!(occupation_time(&OpenSetSpec::empty(), &p, &h).unwrap(), 0.0);
    }

    #[test]
    fn slab_occupation_is_resolution_stable() {
        let delta = 0.1;
        let set = OpenSetSpec::new(vec![OpenBox::interval(0.0, 1.0, 0.0, delta)]);
        let h = ConstantShift::zero(unit(), 1);
        let n = 10_000;
        let mut coarse = Vec::with_capacity(n);
        let mut fine = Vec::with_capacity(n);
        for trial in 0..n as u64 {
            let p = sample_path(8, 1, 1.0, 21, trial).unwrap();
            coarse.push(occupation_time(&set, &p, &h).unwrap());
            fine.push(occupation_time(&set, &refine(&p).unwrap(), &h).unwrap());
        }
        let (mc, mf) = (stats::mean(&coarse), stats::mean(&fine));
        let se = (stats::variance(&fine) / n as f64).sqrt();
        // Expected sojourn of W in (0, δ) on [0,1], integrated density.
        let mut exact = 0.0;
        let k = 4000;
        for i in 0..k {
            let t = (i as f64 + 0.5) / k as f64;
            let s = t.sqrt();
            exact += (stats::normal_cdf(delta / s) - 0.5) / k as f64;
        }
        assert!((mc - mf).abs() < 4.0 * se, "{mc} {mf} {se}");
        assert!((mf - exact).abs() < 4.0 * se + 2e-3, "{mf} {exact} {se}");
    }

    #[test]
    fn union_measure_matches_inclusion_exclusion() {
        let set = OpenSetSpec::from_intervals(&[
            [0.0, 0.5, 0.0, 1.0],
            [0.25, 1.0, 0.5, 2.0],
            [0.1, 0.2, -1.0, 3.0],
        ]);
        let ie = set.inclusion_exclusion().unwrap();
        assert!((set.measure() - ie).abs() < 1e-12);
        assert!((ie - (0.5 + 1.125 - 0.125 + 0.4 - 0.1 - 0.0)).abs() < 1e-12);
    }

    fn arb_box() -> impl Strategy<Value = [f64; 4]> {
        (0.0f64..1.0, 0.0f64..1.0, -2.0f64..2.0, 0.0f64..2.0).prop_map(|(a, b, x, w)| {
            let (t0, t1) = if a < b { (a, b) } else { (b, a) };
            [t0, t1, x, x + w]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inclusion_exclusion_invariant(boxes in prop::collection::vec(arb_box(), 1..7)) {
            let set = OpenSetSpec::from_intervals(&boxes);
            let m = set.measure();
            prop_assert!(m >= 0.0);
            prop_assert!((m - set.inclusion_exclusion().unwrap()).abs() < 1e-12);
        }

        #[test]
        fn occupation_is_monotone_and_additive(boxes in prop::collection::vec(arb_box(), 1..6), seed in 0u64..1000) {
            let p = sample_path(8, 1, 1.0, seed, 0).unwrap();
            let h = ConstantShift::zero(unit(), 1);
            let mut prev = 0.0;
            for k in 1..=boxes.len() {
                let o = occupation_time(&OpenSetSpec::from_intervals(&boxes[..k]), &p, &h).unwrap();
                prop_assert!(o >= prev);
                prev = o;
            }
            // Disjoint halves of one box.
            let [t0, t1, x0, x1] = boxes[0];
            let xm = 0.5 * (x0 + x1);
            let left = OpenSetSpec::from_intervals(&[[t0, t1, x0, xm]]);
            let right = OpenSetSpec::from_intervals(&[[t0, t1, xm, x1]]);
            let both = OpenSetSpec::from_intervals(&[[t0, t1, x0, xm], [t0, t1, xm, x1]]);
            let sum = occupation_time(&left, &p, &h).unwrap() + occupation_time(&right, &p, &h).unwrap();
            prop_assert_eq!(occupation_time(&both, &p, &h).unwrap(), sum);
        }

        #[test]
        fn phi_is_linear_in_b(seed in 0u64..1000, shift in -1.0f64..1.0) {
            let p = sample_path(9, 1, 1.0, seed, 1).unwrap();
            let h = ConstantShift::new(TimeWindow::new(0.25, 0.75).unwrap(), vec![shift]);
            let b1 = spec("sin");
            let b2 = spec("checkerboard:cell=0.1");
            let sum = shifted_integral_with(&p, &h, 1, |t, x, out| out[0] = b1.eval1(t, x[0]) + b2.eval1(t, x[0])).unwrap()[0];
            let parts = shifted_drift_integral(&b1, &p, &h).unwrap()[0] + shifted_drift_integral(&b2, &p, &h).unwrap()[0];
            prop_assert!((sum - parts).abs() < 1e-12);
        }

        #[test]
        fn equal_shifts_give_equal_phi(seed in 0u64..1000, shift in -1.0f64..1.0) {
            let p = sample_path(8, 1, 1.0, seed, 2).unwrap();
            let w = TimeWindow::new(0.5, 0.625).unwrap();
            let b = spec("fatcantor:depth=6");
            let a = shifted_drift_integral(&b, &p, &ConstantShift::new(w, vec![shift])).unwrap();
            let c = shifted_drift_integral(&b, &p, &ConstantShift::new(w, vec![shift])).unwrap();
            prop_assert_eq!(a, c);
        }
    }
}
