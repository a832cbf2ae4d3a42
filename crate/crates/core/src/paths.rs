//! Dyadic Brownian paths.
//!
//! A path at level `k` on `[0, T]` holds `W` at the `2^k + 1` nodes
//! `i T / 2^k`. Values are built top-down by Brownian-bridge bisection:
//! `W_T` first, then the midpoint of every cell, level by level. Each node
//! draws its Gaussian from a stream keyed by `(seed, trial, coordinate,
//! node id)`, so
//!
//! * a path is a pure function of `(seed, trial_index, level, dim, horizon)`,
//! * [`refine`] of a level-`k` path equals the level-`k + 1` path bit for bit,
//! * trials can be generated in any order or in parallel.

use alloc::vec;
use alloc::vec::Vec;
use libm::{fabs, log, sqrt};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Default cap on the number of stored path values (scalars).
pub const DEFAULT_VALUE_CAP: u64 = 1 << 26;

/// A time window `[r, u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub r: f64,
    pub u: f64,
}

impl TimeWindow {
    pub fn new(r: f64, u: f64) -> Result<Self> {
        if !(r >= 0.0 && u > r) {
            return Err(Error::Precondition(alloc::format!(
                "window needs 0 <= r < u, got [{r}, {u}]"
            )));
        }
        Ok(Self { r, u })
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.u - self.r
    }

    /// Chaining windows must be short.
    pub fn check_chaining(&self) -> Result<()> {
        if self.len() > 0.5 {
            return Err(Error::Precondition(alloc::format!(
                "chaining needs l <= 1/2, got l = {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Equispaced dyadic grid on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicGrid {
    pub level: u32,
    pub horizon: f64,
}

impl DyadicGrid {
    pub fn new(level: u32, horizon: f64) -> Self {
        Self { level, horizon }
    }

    #[inline]
    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells() + 1
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.cells() as f64
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        // Exact for power-of-two horizons.
        self.horizon * (i as f64 / self.cells() as f64)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Grid index of time `t`, if `t` is a node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let i = libm::round(x);
        if i < 0.0 || i > self.cells() as f64 || fabs(x - i) > 1e-9 {
            return None;
        }
        Some(i as usize)
    }
}

/// A `dim`-dimensional Brownian trajectory sampled on a dyadic grid.
///
/// `values` is point-major: coordinate `c` of node `i` is
/// `values[i * dim + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: DyadicGrid,
    pub dim: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub trial_index: u64,
}

#[inline]
fn node_id(level: u32, index: usize) -> u64 {
    if level == 0 {
        1
    } else {
        (1u64 << level) + index as u64
    }
}

#[inline]
fn node_normal(seed: u64, trial: u64, coord: usize, id: u64) -> f64 {
    rng::normal_at(&[tag::PATH, seed, trial, coord as u64, id])
}

fn check_capacity(level: u32, dim: usize, cap: u64) -> Result<()> {
    let requested = if level >= 63 {
        u64::MAX
    } else {
        ((1u64 << level) + 1).saturating_mul(dim as u64)
    };
    if requested > cap {
        return Err(Error::Capacity { requested, cap });
    }
    Ok(())
}

/// Samples a Brownian path with the default capacity cap.
pub fn sample_path(level: u32, dim: usize, horizon: f64, seed: u64, trial_index: u64) -> Result<BrownianPath> {
    sample_path_capped(level, dim, horizon, seed, trial_index, DEFAULT_VALUE_CAP)
}

pub fn sample_path_capped(
    level: u32,
    dim: usize,
    horizon: f64,
    seed: u64,
    trial_index: u64,
    cap: u64,
) -> Result<BrownianPath> {
    if dim == 0 || !(horizon > 0.0) {
        return Err(Error::Precondition(alloc::format!(
            "sample_path needs dim >= 1 and horizon > 0, got dim = {dim}, horizon = {horizon}"
        )));
    }
    check_capacity(level, dim, cap)?;
    let grid = DyadicGrid::new(level, horizon);
    let n = grid.cells();
    let mut values = vec![0.0; (n + 1) * dim];
    let root_sd = sqrt(horizon);
    for c in 0..dim {
        values[n * dim + c] = root_sd * node_normal(seed, trial_index, c, node_id(0, 1));
    }
    // Bisection: at sub-level j the parents are `2 * stride` apart.
    let mut stride = n / 2;
    let mut j = 1;
    while stride >= 1 {
        let parent_dt = horizon * (2 * stride) as f64 / n as f64;
        let sd = sqrt(parent_dt / 4.0);
        let mut i = stride;
        while i < n {
            let local = i / stride;
            for c in 0..dim {
                let mid = 0.5 * (values[(i - stride) * dim + c] + values[(i + stride) * dim + c]);
                values[i * dim + c] = mid + sd * node_normal(seed, trial_index, c, node_id(j, local));
            }
            i += 2 * stride;
        }
        stride /= 2;
        j += 1;
    }
    Ok(BrownianPath {
        grid,
        dim,
        values,
        seed,
        trial_index,
    })
}

/// Inserts bridge midpoints, producing the level `k + 1` path.
pub fn refine(path: &BrownianPath) -> Result<BrownianPath> {
    refine_capped(path, DEFAULT_VALUE_CAP)
}

pub fn refine_capped(path: &BrownianPath, cap: u64) -> Result<BrownianPath> {
    let level = path.grid.level + 1;
    check_capacity(level, path.dim, cap)?;
    let dim = path.dim;
    let n_old = path.grid.cells();
    let grid = DyadicGrid::new(level, path.grid.horizon);
    let sd = sqrt(path.grid.dt() / 4.0);
    let mut values = vec![0.0; (2 * n_old + 1) * dim];
    for i in 0..=n_old {
        values[2 * i * dim..(2 * i + 1) * dim].copy_from_slice(&path.values[i * dim..(i + 1) * dim]);
    }
    for i in 0..n_old {
        let k = 2 * i + 1;
        for c in 0..dim {
            let mid = 0.5 * (values[(k - 1) * dim + c] + values[(k + 1) * dim + c]);
            values[k * dim + c] = mid + sd * node_normal(path.seed, path.trial_index, c, node_id(level, k));
        }
    }
    Ok(BrownianPath {
        grid,
        dim,
        values,
        seed: path.seed,
        trial_index: path.trial_index,
    })
}

impl BrownianPath {
    #[inline]
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// First coordinate at node `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.values[i * self.dim]
    }

    /// Values of coordinate `c` at every node.
    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.values[i * self.dim + c]).collect()
    }

    /// Subsamples to a coarser level (every `2^(k - level)`-th node).
    pub fn restrict(&self, level: u32) -> Result<BrownianPath> {
        if level > self.grid.level {
            return Err(Error::Precondition(alloc::format!(
                "cannot restrict level {} to finer level {level}",
                self.grid.level
            )));
        }
        let step = 1usize << (self.grid.level - level);
        let grid = DyadicGrid::new(level, self.grid.horizon);
        let mut values = Vec::with_capacity(grid.len() * self.dim);
        for i in 0..grid.len() {
            values.extend_from_slice(self.point(i * step));
        }
        Ok(BrownianPath {
            grid,
            dim: self.dim,
            values,
            seed: self.seed,
            trial_index: self.trial_index,
        })
    }

    /// `max_t |W_t|_∞` over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(fabs(*v)))
    }
}

/// Reversed path `W̃_t = W_{1-t}` and the driving noise `B` of its
/// semimartingale decomposition `W̃_t = W̃_0 + B_t - ∫_0^t W̃_s / (1 - s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reversal {
    pub reversed: BrownianPath,
    /// `B` at the grid nodes, point-major like `values`.
    pub noise: Vec<f64>,
    /// Per-cell integrals `∫ W̃_s / (1 - s) ds` of the linear interpolant.
    pub drift_cells: Vec<f64>,
    /// Drift integral over the cell ending at `s = 1`.
    pub last_cell: f64,
}

/// Integral over `[a, b] ⊂ [0, 1]` of `g(s) / (1 - s)` with `g` linear,
/// `g(a) = ga`, `g(b) = gb`.
///
/// Writing `g(s) = g(1) - m (1 - s)` gives `g(1) ln((1-a)/(1-b)) - m (b - a)`.
/// On the cell ending at 1 the reversed path vanishes at `s = 1`, so
/// `g(1) = 0` and the logarithmic singularity drops out.
fn reciprocal_drift_cell(a: f64, b: f64, ga: f64, gb: f64, last: bool) -> f64 {
    let h = b - a;
    let m = (gb - ga) / h;
    if last {
        return -m * h;
    }
    let g1 = ga + m * (1.0 - a);
    g1 * log((1.0 - a) / (1.0 - b)) - m * h
}

/// Time reversal on `[0, 1]`.
pub fn time_reverse(path: &BrownianPath) -> Result<Reversal> {
    if path.grid.horizon != 1.0 || path.grid.level < 4 {
        return Err(Error::Precondition(alloc::format!(
            "time_reverse needs horizon 1 and level >= 4, got horizon {}, level {}",
            path.grid.horizon,
            path.grid.level
        )));
    }
    let dim = path.dim;
    let n = path.grid.cells();
    let mut rev = Vec::with_capacity(path.values.len());
    for i in 0..=n {
        rev.extend_from_slice(path.point(n - i));
    }
    let reversed = BrownianPath {
        grid: path.grid,
        dim,
        values: rev,
        seed: path.seed,
        trial_index: path.trial_index,
    };
    let mut noise = vec![0.0; (n + 1) * dim];
    let mut drift_cells = vec![0.0; n * dim];
    let mut last_cell = 0.0;
    for c in 0..dim {
        let mut acc = 0.0;
        for j in 0..n {
            let a = path.grid.time(j);
            let b = path.grid.time(j + 1);
            let ga = reversed.values[j * dim + c];
            let gb = reversed.values[(j + 1) * dim + c];
            let q = reciprocal_drift_cell(a, b, ga, gb, j + 1 == n);
            drift_cells[j * dim + c] = q;
            acc += q;
            noise[(j + 1) * dim + c] = gb - reversed.values[c] + acc;
            if j + 1 == n && c == 0 {
                last_cell = q;
            }
        }
    }
    Ok(Reversal {
        reversed,
        noise,
        drift_cells,
        last_cell,
    })
}

/// Rescales `s ↦ l^{-1/2} (W_{r + s l} - W_r)` to a unit-horizon path.
///
/// The window must start and end on grid nodes and span a power-of-two
/// number of cells.
pub fn scale_to_unit(path: &BrownianPath, window: TimeWindow) -> Result<BrownianPath> {
    let grid = path.grid;
    let (Some(i0), Some(i1)) = (grid.index_of(window.r), grid.index_of(window.u)) else {
        return Err(Error::Alignment {
            r: window.r,
            u: window.u,
        });
    };
    let cells = i1.checked_sub(i0).filter(|c| *c > 0 && c.is_power_of_two()).ok_or(Error::Alignment {
        r: window.r,
        u: window.u,
    })?;
    let level = cells.trailing_zeros();
    let l = window.len();
    let scale = 1.0 / sqrt(l);
    let dim = path.dim;
    let base = path.point(i0).to_vec();
    let mut values = Vec::with_capacity((cells + 1) * dim);
    for i in i0..=i1 {
        for c in 0..dim {
            values.push(scale * (path.values[i * dim + c] - base[c]));
        }
    }
    Ok(BrownianPath {
        grid: DyadicGrid::new(level, 1.0),
        dim,
        values,
        seed: path.seed,
        trial_index: path.trial_index,
    })
}
