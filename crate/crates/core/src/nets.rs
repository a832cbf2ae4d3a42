//! ε-nets of `Lip_N([r, u], R^d)` with the uniform metric, projection onto
//! them, and the multiscale chaining experiment.
//!
//! The net is the Kolmogorov–Tikhomirov construction, coordinate by
//! coordinate: knots every ε (the last cell may be shorter), a start value
//! on the (ε/2)-grid of `[-N, N]`, then at each knot a step in
//! `{-ε, 0, +ε}` (the last step uses the short cell length). Values are
//! clamped to `[-N, N]`, which keeps both the sup bound and the Lipschitz
//! constant. Elements are addressed by a mixed-radix index whose order
//! agrees with the lexicographic order of their code strings.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use libm::{ceil, log, pow, round, sqrt};
use rand_core::RngCore;

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::functionals::{pairwise_sum, sup_distance, Perturbation};
use crate::mc::{run_trials, Executor, TrialPlan};
use crate::paths::TimeWindow;
use crate::rng::{key, tag, KeyedStream};
use crate::stats::{self, LineFit};

const LIP_TOL: f64 = 1e-12;
const LN_3: f64 = 1.098_612_288_668_109_8;

/// Piecewise-linear `h : [r, u] → R^d` with `‖h(t) - h(s)‖_∞ ≤ |t - s|` and
/// `‖h‖_∞ ≤ N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipFunction {
    pub window: TimeWindow,
    pub knots: Vec<f64>,
    /// Knot-major: `values[j * dim + c]`.
    pub values: Vec<f64>,
    pub dim: usize,
    pub n_sup: f64,
}

impl LipFunction {
    pub fn new(window: TimeWindow, knots: Vec<f64>, values: Vec<f64>, dim: usize, n_sup: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::NotLipschitz(m));
        if dim == 0 || knots.len() < 2 || values.len() != knots.len() * dim {
            return bad(alloc::format!(
                "{} knots and {} values for dimension {dim}",
                knots.len(),
                values.len()
            ));
        }
        if (knots[0] - window.r).abs() > LIP_TOL || (knots[knots.len() - 1] - window.u).abs() > LIP_TOL {
            return bad("knots must span the window".into());
        }
        for j in 1..knots.len() {
            let dt = knots[j] - knots[j - 1];
            if !(dt > 0.0) {
                return bad("knots must increase".into());
            }
            for c in 0..dim {
                let dv = (values[j * dim + c] - values[(j - 1) * dim + c]).abs();
                if dv > dt + LIP_TOL * (1.0 + n_sup) {
                    return bad(alloc::format!("slope {} on cell {j}", dv / dt));
                }
            }
        }
        if let Some(v) = values.iter().find(|v| !(v.abs() <= n_sup + LIP_TOL)) {
            return bad(alloc::format!("|h| = {} exceeds N = {n_sup}", v.abs()));
        }
        Ok(Self {
            window,
            knots,
            values,
            dim,
            n_sup,
        })
    }

    /// `h(t) = value` (a net-independent element of `Lip_N`).
    pub fn constant(window: TimeWindow, value: &[f64], n_sup: f64) -> Result<Self> {
        let mut values = value.to_vec();
        values.extend_from_slice(value);
        Self::new(window, vec![window.r, window.u], values, value.len(), n_sup)
    }

    pub fn at(&self, t: f64, c: usize) -> f64 {
        let k = &self.knots;
        let n = k.len();
        let j = k.partition_point(|v| *v <= t).clamp(1, n - 1) - 1;
        let w = ((t - k[j]) / (k[j + 1] - k[j])).clamp(0.0, 1.0);
        let a = self.values[j * self.dim + c];
        let b = self.values[(j + 1) * self.dim + c];
        a + w * (b - a)
    }

    /// Random element of `Lip_N`: `pieces` cells of random length, slopes
    /// uniform in `[-1, 1]`, start uniform in `[-N, N]`, clamped.
    pub fn random(window: TimeWindow, n_sup: f64, dim: usize, pieces: usize, stream: &mut KeyedStream) -> Self {
        let mut cuts: Vec<f64> = (0..pieces.saturating_sub(1))
            .map(|_| window.r + window.len() * stream.uniform())
            .collect();
        cuts.sort_by(f64::total_cmp);
        let mut knots = vec![window.r];
        knots.extend(cuts.into_iter().filter(|t| *t > window.r && *t < window.u));
        knots.push(window.u);
        knots.dedup();
        let mut values = vec![0.0; knots.len() * dim];
        for c in 0..dim {
            values[c] = n_sup * (2.0 * stream.uniform() - 1.0);
        }
        for j in 1..knots.len() {
            let dt = knots[j] - knots[j - 1];
            for c in 0..dim {
                let slope = 2.0 * stream.uniform() - 1.0;
                values[j * dim + c] = (values[(j - 1) * dim + c] + slope * dt).clamp(-n_sup, n_sup);
            }
        }
        Self {
            window,
            knots,
            values,
            dim,
            n_sup,
        }
    }
}

impl Perturbation for LipFunction {
    fn window(&self) -> TimeWindow {
        self.window
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.at(t, c);
        }
    }

    fn breakpoints(&self) -> Option<Vec<f64>> {
        Some(self.knots.clone())
    }
}

/// Nets with more elements than this are implicit: projection works,
/// enumeration does not.
pub const ENUMERATION_CAP: u128 = 100_000_000;

/// Code of one net element: per coordinate a start index and one step
/// trit per cell (`0 = -`, `1 = 0`, `2 = +`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct NetCode {
    pub starts: Vec<u32>,
    pub steps: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsNet {
    pub epsilon: f64,
    pub window: TimeWindow,
    pub n_sup: f64,
    pub dim: usize,
    pub knots: Vec<f64>,
    /// Step size of each cell (ε except possibly the last).
    pub step_sizes: Vec<f64>,
    /// `⌈2N/ε⌉`; start values are `(i - half) ε/2` for `i ∈ 0..=2·half`.
    pub half: u32,
    /// Exact cardinality, `None` on overflow.
    pub cardinality: Option<u128>,
    pub log_cardinality: f64,
}

/// Number of knots at spacing ε over a window of length `l`.
pub fn knot_count(l: f64, epsilon: f64) -> usize {
    let q = l / epsilon;
    let r = round(q);
    let cells = if (q - r).abs() <= 1e-9 * q.max(1.0) { r } else { ceil(q) };
    cells.max(1.0) as usize + 1
}

pub fn build_net(window: TimeWindow, n_sup: f64, epsilon: f64, dim: usize) -> Result<EpsNet> {
    if !(epsilon > 0.0 && n_sup > 0.0) || dim == 0 {
        return Err(Error::Precondition(alloc::format!(
            "net needs epsilon > 0, N > 0, d >= 1; got {epsilon}, {n_sup}, {dim}"
        )));
    }
    let kc = knot_count(window.len(), epsilon);
    let mut knots: Vec<f64> = (0..kc - 1).map(|j| window.r + j as f64 * epsilon).collect();
    knots.push(window.u);
    let step_sizes: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let q = 2.0 * n_sup / epsilon;
    let r = round(q);
    let half = if (q - r).abs() <= 1e-9 * q.max(1.0) { r } else { ceil(q) };
    if half > u32::MAX as f64 / 2.0 - 1.0 {
        return Err(Error::Capacity {
            requested: u64::MAX,
            cap: u32::MAX as u64,
        });
    }
    let half = half as u32;
    let per_start = 2 * half as u128 + 1;
    let mut card = Some(1u128);
    for _ in 0..dim {
        card = card.and_then(|c| c.checked_mul(per_start));
        for _ in 0..kc - 1 {
            card = card.and_then(|c| c.checked_mul(3));
        }
    }
    let log_cardinality = dim as f64 * (log(per_start as f64) + (kc - 1) as f64 * LN_3);
    Ok(EpsNet {
        epsilon,
        window,
        n_sup,
        dim,
        knots,
        step_sizes,
        half,
        cardinality: card,
        log_cardinality,
    })
}

impl EpsNet {
    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    pub fn cells(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn starts_per_coordinate(&self) -> u32 {
        2 * self.half + 1
    }

    /// `(2⌈2N/ε⌉ + 1)^d · 3^{d (knot_count - 1)}`.
    pub fn closed_form_log(&self) -> f64 {
        self.dim as f64 * log((2 * self.half + 1) as f64) + self.dim as f64 * LN_3 * self.cells() as f64
    }

    pub fn is_enumerable(&self) -> bool {
        matches!(self.cardinality, Some(c) if c <= ENUMERATION_CAP)
    }

    fn start_value(&self, i: u32) -> f64 {
        ((i as f64 - self.half as f64) * 0.5 * self.epsilon).clamp(-self.n_sup, self.n_sup)
    }

    /// Knot values of one coordinate.
    fn coordinate_values(&self, start: u32, steps: &[u8], out: &mut Vec<f64>) {
        out.clear();
        let mut v = self.start_value(start);
        out.push(v);
        for (s, h) in steps.iter().zip(&self.step_sizes) {
            v = (v + (*s as f64 - 1.0) * h).clamp(-self.n_sup, self.n_sup);
            out.push(v);
        }
    }

    pub fn element(&self, code: &NetCode) -> Result<LipFunction> {
        let m = self.cells();
        if code.starts.len() != self.dim || code.steps.len() != self.dim * m {
            return Err(Error::Precondition("code does not match the net shape".into()));
        }
        if code.starts.iter().any(|s| *s > 2 * self.half) || code.steps.iter().any(|s| *s > 2) {
            return Err(Error::Precondition("code digit out of range".into()));
        }
        let kc = self.knot_count();
        let mut values = vec![0.0; kc * self.dim];
        let mut buf = Vec::with_capacity(kc);
        for c in 0..self.dim {
            self.coordinate_values(code.starts[c], &code.steps[c * m..(c + 1) * m], &mut buf);
            for (j, v) in buf.iter().enumerate() {
                values[j * self.dim + c] = *v;
            }
        }
        Ok(LipFunction {
            window: self.window,
            knots: self.knots.clone(),
            values,
            dim: self.dim,
            n_sup: self.n_sup,
        })
    }

    /// Decodes a mixed-radix index; coordinate 0's start is the most
    /// significant digit, so index order is code order.
    pub fn code_of(&self, mut index: u128) -> Result<NetCode> {
        match self.cardinality {
            Some(c) if index < c => {}
            _ => return Err(Error::Precondition(alloc::format!("index {index} out of range"))),
        }
        let m = self.cells();
        let ns = self.starts_per_coordinate() as u128;
        let mut starts = vec![0u32; self.dim];
        let mut steps = vec![0u8; self.dim * m];
        for c in (0..self.dim).rev() {
            for j in (0..m).rev() {
                steps[c * m + j] = (index % 3) as u8;
                index /= 3;
            }
            starts[c] = (index % ns) as u32;
            index /= ns;
        }
        Ok(NetCode { starts, steps })
    }

    pub fn index_of(&self, code: &NetCode) -> u128 {
        let m = self.cells();
        let ns = self.starts_per_coordinate() as u128;
        let mut index = 0u128;
        for c in 0..self.dim {
            index = index * ns + code.starts[c] as u128;
            for j in 0..m {
                index = index * 3 + code.steps[c * m + j] as u128;
            }
        }
        index
    }

    /// Text form, e.g. `s03:021|s17:111`; lexicographic order of these
    /// strings is index order.
    pub fn code_string(&self, code: &NetCode) -> String {
        let width = decimal_width(2 * self.half);
        let m = self.cells();
        let mut s = String::new();
        for c in 0..self.dim {
            if c > 0 {
                s.push('|');
            }
            let _ = write!(s, "s{:0width$}:", code.starts[c], width = width);
            for t in &code.steps[c * m..(c + 1) * m] {
                s.push((b'0' + t) as char);
            }
        }
        s
    }

    /// All elements in index order. Fails for implicit nets.
    pub fn enumerate(&self) -> Result<impl Iterator<Item = (NetCode, LipFunction)> + '_> {
        let card = match self.cardinality {
            Some(c) if c <= ENUMERATION_CAP => c,
            c => {
                return Err(Error::Capacity {
                    requested: c.map_or(u64::MAX, |c| c.min(u64::MAX as u128) as u64),
                    cap: ENUMERATION_CAP as u64,
                })
            }
        };
        Ok((0..card).map(move |i| {
            let code = self.code_of(i).expect("index in range");
            let f = self.element(&code).expect("valid code");
            (code, f)
        }))
    }

    /// Greedy nearest projection `π_ε h`: nearest start value, then at each
    /// knot the step whose value is nearest to `h`. Ties go to the smaller
    /// digit, hence to the lexicographically smaller code.
    pub fn project_code(&self, h: &LipFunction) -> Result<NetCode> {
        if h.dim != self.dim || h.window != self.window {
            return Err(Error::NotLipschitz("window or dimension differs from the net".into()));
        }
        if h.n_sup > self.n_sup + LIP_TOL {
            return Err(Error::NotLipschitz(alloc::format!("N = {} exceeds the net's N = {}", h.n_sup, self.n_sup)));
        }
        let m = self.cells();
        let mut starts = vec![0u32; self.dim];
        let mut steps = vec![0u8; self.dim * m];
        for c in 0..self.dim {
            let target = h.at(self.knots[0], c);
            let mut best = (f64::INFINITY, 0u32);
            let guess = (target / (0.5 * self.epsilon) + self.half as f64) as i64;
            for i in (guess - 1).max(0)..=(guess + 2).min(2 * self.half as i64) {
                let e = (self.start_value(i as u32) - target).abs();
                if e < best.0 {
                    best = (e, i as u32);
                }
            }
            starts[c] = best.1;
            let mut v = self.start_value(best.1);
            for j in 0..m {
                let target = h.at(self.knots[j + 1], c);
                let mut choice = (f64::INFINITY, 0u8, v);
                for t in 0..3u8 {
                    let cand = (v + (t as f64 - 1.0) * self.step_sizes[j]).clamp(-self.n_sup, self.n_sup);
                    let e = (cand - target).abs();
                    if e < choice.0 {
                        choice = (e, t, cand);
                    }
                }
                steps[c * m + j] = choice.1;
                v = choice.2;
            }
        }
        Ok(NetCode { starts, steps })
    }

    pub fn project(&self, h: &LipFunction) -> Result<LipFunction> {
        self.element(&self.project_code(h)?)
    }
}

fn decimal_width(mut n: u32) -> usize {
    let mut w = 1;
    while n >= 10 {
        n /= 10;
        w += 1;
    }
    w
}

/// `ε_k = l^{1+k/4}`, `λ_k = μ l^{-1/6-k/6}`, `μ² = (γ+1)/α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSchedule {
    pub l: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
    pub eps_seq: Vec<f64>,
    pub lambda_seq: Vec<f64>,
    pub k_max: usize,
    /// `2K + 3` with `K = 1/(1 - l^{1/4})`; reported, never used.
    pub theta: f64,
}

pub const CHAIN_K_MAX: usize = 40;
pub const CHAIN_EPS_FLOOR: f64 = 1e-8;

pub fn chain_schedule(l: f64, alpha: f64, gamma: f64) -> Result<ChainSchedule> {
    if !(l > 0.0 && l <= 0.5) {
        return Err(Error::Precondition(alloc::format!("chaining needs 0 < l <= 1/2, got {l}")));
    }
    if !(alpha > 0.0 && gamma > 0.0) {
        return Err(Error::Precondition("alpha and gamma must be positive".into()));
    }
    let mu = sqrt((gamma + 1.0) / alpha);
    let mut eps_seq = Vec::new();
    let mut lambda_seq = Vec::new();
    let mut k = 0;
    loop {
        let kf = k as f64;
        eps_seq.push(pow(l, 1.0 + kf / 4.0));
        lambda_seq.push(mu * pow(l, -1.0 / 6.0 - kf / 6.0));
        if k == CHAIN_K_MAX || eps_seq[k] < CHAIN_EPS_FLOOR {
            break;
        }
        k += 1;
    }
    let kk = 1.0 / (1.0 - pow(l, 0.25));
    Ok(ChainSchedule {
        l,
        alpha,
        gamma,
        mu,
        eps_seq,
        lambda_seq,
        k_max: k,
        theta: 2.0 * kk + 3.0,
    })
}

impl ChainSchedule {
    /// `l^{1/2} ε_k λ_k`.
    pub fn product(&self, k: usize) -> f64 {
        sqrt(self.l) * self.eps_seq[k] * self.lambda_seq[k]
    }

    /// `μ l^{4/3 + k/12}`.
    pub fn product_closed_form(&self, k: usize) -> f64 {
        self.mu * pow(self.l, 4.0 / 3.0 + k as f64 / 12.0)
    }
}

/// Id of an element of `N_{ε_0} ∪ N_{ε_1}`: `(scale, index)`.
type ElementId = (u8, u128);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    /// Pairs sampled per radius when the union has more than
    /// [`ALL_PAIRS_MAX_CARDINALITY`] elements.
    pub pair_count: usize,
    /// Threshold constant: a path fails when its sup exceeds `c l^{4/3}`.
    pub c_threshold: f64,
    /// Quantile of the per-path sups reported as `modulus_sup`.
    pub quantile: f64,
    pub cells_per_window: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            pair_count: 10_000,
            c_threshold: 1.0,
            quantile: 0.99,
            cells_per_window: 64,
        }
    }
}

pub const ALL_PAIRS_MAX_CARDINALITY: u128 = 1000;
const MAX_PAIR_ATTEMPTS: u64 = 200_000_000;

/// Admissible pairs of `N_{ε_0} ∪ N_{ε_1}` (`ε_0 = l`, `ε_1 = l^{5/4}`)
/// within sup distance `radius`, seeded by the window, `N`, `d` and the
/// radius only.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub radius: f64,
    pub pairs: Vec<(usize, usize)>,
    pub exhaustive: bool,
}

struct ChainNets {
    nets: [EpsNet; 2],
    elements: Vec<ElementId>,
}

impl ChainNets {
    fn new(window: TimeWindow, n_sup: f64, dim: usize) -> Result<Self> {
        let l = window.len();
        let nets = [build_net(window, n_sup, l, dim)?, build_net(window, n_sup, pow(l, 1.25), dim)?];
        for n in &nets {
            if !n.is_enumerable() {
                return Err(Error::Infeasible(alloc::format!(
                    "net at ε = {} has log-cardinality {:.1}, above the enumeration cap",
                    n.epsilon,
                    n.log_cardinality
                )));
            }
        }
        Ok(Self { nets, elements: Vec::new() })
    }

    fn total(&self) -> u128 {
        self.nets[0].cardinality.unwrap() + self.nets[1].cardinality.unwrap()
    }

    fn id_of(&self, flat: u128) -> ElementId {
        let c0 = self.nets[0].cardinality.unwrap();
        if flat < c0 {
            (0, flat)
        } else {
            (1, flat - c0)
        }
    }

    fn function(&self, id: ElementId) -> LipFunction {
        let net = &self.nets[id.0 as usize];
        net.element(&net.code_of(id.1).unwrap()).unwrap()
    }

    fn start(&self, id: ElementId) -> Vec<f64> {
        let net = &self.nets[id.0 as usize];
        let code = net.code_of(id.1).unwrap();
        code.starts.iter().map(|s| net.start_value(*s)).collect()
    }

    fn intern(&mut self, id: ElementId) -> usize {
        match self.elements.iter().position(|e| *e == id) {
            Some(i) => i,
            None => {
                self.elements.push(id);
                self.elements.len() - 1
            }
        }
    }
}

fn sample_pairs(nets: &mut ChainNets, radius: f64, pair_count: usize, seed: u64) -> Result<PairSample> {
    let total = nets.total();
    let mut raw: Vec<(ElementId, ElementId)> = Vec::new();
    let exhaustive = total <= ALL_PAIRS_MAX_CARDINALITY;
    if exhaustive {
        let fs: Vec<LipFunction> = (0..total).map(|i| nets.function(nets.id_of(i))).collect();
        for i in 0..fs.len() {
            for j in i + 1..fs.len() {
                if sup_distance(&fs[i], &fs[j], fs[i].dim) <= radius {
                    raw.push((nets.id_of(i as u128), nets.id_of(j as u128)));
                }
            }
        }
    } else {
        let mut rng = KeyedStream::new(seed);
        let draw = |rng: &mut KeyedStream| -> u128 {
            let hi = rng.next_u64() as u128;
            let lo = rng.next_u64() as u128;
            ((hi << 64) | lo) % total
        };
        let mut attempts = 0u64;
        while raw.len() < pair_count {
            attempts += 1;
            if attempts > MAX_PAIR_ATTEMPTS {
                return Err(Error::Infeasible(alloc::format!(
                    "only {} admissible pairs within {radius} after {MAX_PAIR_ATTEMPTS} draws",
                    raw.len()
                )));
            }
            let (a, b) = (nets.id_of(draw(&mut rng)), nets.id_of(draw(&mut rng)));
            if a == b {
                continue;
            }
            // Both are 1-Lipschitz on a window of length l, so the start gap
            // bounds the sup distance from below.
            let (sa, sb) = (nets.start(a), nets.start(b));
            if sa.iter().zip(&sb).any(|(x, y)| (x - y).abs() > radius) {
                continue;
            }
            let (fa, fb) = (nets.function(a), nets.function(b));
            if sup_distance(&fa, &fb, fa.dim) <= radius {
                raw.push((a, b));
            }
        }
    }
    let pairs = raw.into_iter().map(|(a, b)| (nets.intern(a), nets.intern(b))).collect();
    Ok(PairSample {
        radius,
        pairs,
        exhaustive,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainExperimentReport {
    pub l: f64,
    pub n_paths: u64,
    pub element_count: usize,
    pub pairs_3l: usize,
    pub pairs_4l: usize,
    pub exhaustive: bool,
    /// `config.quantile` quantile over paths of the sup over 3l-pairs.
    pub modulus_sup: f64,
    pub modulus_sup_4l: f64,
    pub modulus_mean: f64,
    /// `modulus_sup / l^{4/3}`.
    pub bound_c_hat: f64,
    pub threshold: f64,
    pub failures: u64,
    pub failure_freq: f64,
    pub failure_ci: (f64, f64),
    pub per_path_sup: Vec<f64>,
}

/// Per path `W`, `sup |φ(h₁, W) - φ(h₂, W)|` over sampled pairs of
/// `N_l ∪ N_{l^{5/4}}` with `‖h₁ - h₂‖_∞ ≤ 3l` (and `≤ 4l`), where
/// `φ(h, W) = ∫_r^u b(s, W_s + h(s)) ds`. The plan level must put
/// `config.cells_per_window` grid cells in the window.
pub fn chain_experiment<E: Executor>(
    exec: &E,
    spec: &DriftSpec,
    window: TimeWindow,
    n_sup: f64,
    plan: &TrialPlan,
    config: &ChainConfig,
) -> Result<ChainExperimentReport> {
    window.check_chaining()?;
    let l = window.len();
    let d = spec.dim;
    let dt = spec.horizon / (1u64 << plan.level) as f64;
    let a = round(window.r / dt) as usize;
    let cells = round(l / dt) as usize;
    if (a as f64 * dt - window.r).abs() > 1e-12 || (cells as f64 * dt - l).abs() > 1e-12 || window.u > spec.horizon {
        return Err(Error::Alignment { r: window.r, u: window.u });
    }
    let mut nets = ChainNets::new(window, n_sup, d)?;
    let words = |k: u64| key(&[tag::NET_PAIRS, window.r.to_bits(), window.u.to_bits(), n_sup.to_bits(), d as u64, k]);
    let p3 = sample_pairs(&mut nets, 3.0 * l, config.pair_count, words(3))?;
    let p4 = sample_pairs(&mut nets, 4.0 * l, config.pair_count, words(4))?;
    // Shift values at the cell midpoints, element-major.
    let ne = nets.elements.len();
    let mut shifts = vec![0.0; ne * cells * d];
    for (e, id) in nets.elements.iter().enumerate() {
        let f = nets.function(*id);
        for i in 0..cells {
            let t = ((a + i) as f64 + 0.5) * dt;
            for c in 0..d {
                shifts[(e * cells + i) * d + c] = f.at(t, c);
            }
        }
    }
    let sups = run_trials(exec, plan, |trial| {
        let path = plan.path(trial, d, spec.horizon)?;
        let mut phi = vec![0.0; ne * d];
        let mut terms = vec![0.0; cells * d];
        let mut x = vec![0.0; d];
        let mut v = vec![0.0; d];
        for e in 0..ne {
            for i in 0..cells {
                let t = ((a + i) as f64 + 0.5) * dt;
                let (p0, p1) = (path.point(a + i), path.point(a + i + 1));
                if d == 1 {
                    terms[i] = spec.eval1(t, 0.5 * (p0[0] + p1[0]) + shifts[e * cells + i]);
                } else {
                    for c in 0..d {
                        x[c] = 0.5 * (p0[c] + p1[c]) + shifts[(e * cells + i) * d + c];
                    }
                    spec.eval_into(t, &x, &mut v);
                    for c in 0..d {
                        terms[c * cells + i] = v[c];
                    }
                }
            }
            for c in 0..d {
                phi[e * d + c] = pairwise_sum(&terms[c * cells..(c + 1) * cells]) * dt;
            }
        }
        let sup_over = |pairs: &[(usize, usize)]| {
            pairs.iter().fold(0.0f64, |m, &(i, j)| {
                (0..d).fold(m, |m, c| m.max((phi[i * d + c] - phi[j * d + c]).abs()))
            })
        };
        Ok((sup_over(&p3.pairs), sup_over(&p4.pairs)))
    })?;
    let s3: Vec<f64> = sups.iter().map(|s| s.0).collect();
    let s4: Vec<f64> = sups.iter().map(|s| s.1).collect();
    let scale = pow(l, 4.0 / 3.0);
    let threshold = config.c_threshold * scale;
    let failures = s3.iter().filter(|s| **s > threshold).count() as u64;
    let n = s3.len() as u64;
    let modulus_sup = stats::quantile(&s3, config.quantile);
    Ok(ChainExperimentReport {
        l,
        n_paths: n,
        element_count: ne,
        pairs_3l: p3.pairs.len(),
        pairs_4l: p4.pairs.len(),
        exhaustive: p3.exhaustive,
        modulus_sup,
        modulus_sup_4l: stats::quantile(&s4, config.quantile),
        modulus_mean: stats::mean(&s3),
        bound_c_hat: modulus_sup / scale,
        threshold,
        failures,
        failure_freq: failures as f64 / n as f64,
        failure_ci: stats::wilson95(failures, n),
        per_path_sup: s3,
    })
}

/// Fit of `log(-log failure_freq)` on `log(1/l)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ZetaFit {
    Fitted { zeta_hat: f64, fit: LineFit },
    /// Too few l values with a failure frequency in `(0, 1/2)`.
    NoObservedFailures { usable: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSweep {
    pub reports: Vec<ChainExperimentReport>,
    /// `log modulus_sup` on `log l`.
    pub slope: Option<LineFit>,
    pub slope_4l: Option<LineFit>,
    pub zeta: ZetaFit,
}

/// Runs [`chain_experiment`] on `[1/2, 1/2 + l]` for each `l`, choosing
/// the grid level so the window has `config.cells_per_window` cells.
pub fn chain_sweep<E: Executor>(
    exec: &E,
    spec: &DriftSpec,
    ls: &[f64],
    n_sup: f64,
    n_paths: u64,
    base_seed: u64,
    config: &ChainConfig,
) -> Result<ChainSweep> {
    let mut reports = Vec::with_capacity(ls.len());
    for &l in ls {
        let window = TimeWindow::new(0.5, 0.5 + l)?;
        let level_f = libm::log2(config.cells_per_window as f64 * spec.horizon / l);
        let level = round(level_f);
        if (level - level_f).abs() > 1e-9 || level < 1.0 {
            return Err(Error::Alignment { r: window.r, u: window.u });
        }
        let plan = TrialPlan::new(n_paths, base_seed, level as u32);
        reports.push(chain_experiment(exec, spec, window, n_sup, &plan, config)?);
    }
    let fit_of = |f: &dyn Fn(&ChainExperimentReport) -> f64| {
        let pts: Vec<(f64, f64)> = reports
            .iter()
            .filter(|r| f(r) > 0.0)
            .map(|r| (log(r.l), log(f(r))))
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        stats::line_fit(&xs, &ys)
    };
    let slope = fit_of(&|r| r.modulus_sup);
    let slope_4l = fit_of(&|r| r.modulus_sup_4l);
    let usable: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.failure_freq > 0.0 && r.failure_freq < 0.5)
        .map(|r| (log(1.0 / r.l), log(-log(r.failure_freq))))
        .collect();
    let zeta = if usable.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = usable.iter().copied().unzip();
        match stats::line_fit(&xs, &ys) {
            Some(fit) => ZetaFit::Fitted { zeta_hat: fit.slope, fit },
            None => ZetaFit::NoObservedFailures { usable: usable.len() },
        }
    } else {
        ZetaFit::NoObservedFailures { usable: usable.len() }
    };
    Ok(ChainSweep {
        reports,
        slope,
        slope_4l,
        zeta,
    })
}
