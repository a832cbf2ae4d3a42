//! Drift coefficients `b(t, x)` with regularity metadata.
//!
//! Multi-dimensional drifts act coordinatewise (`b_i(t, x) = g(t, x_i)`),
//! except the checkerboard, whose sign depends on all coordinates. Norms on
//! `R^d` are max-norms throughout.
//!
//! Drifts are addressable by identifier, see [`DriftSpec::parse`]:
//!
//! ```text
//! id        := family [":" param ("," param)*] modifier*
//! param     := key "=" number
//! modifier  := "@N=" number        (truncation b · 1{|x| < N})
//!            | "@moll=" number     (spatial mollification, d = 1)
//! ```
//!
//! Families: `zero`, `const:c`, `linear:slope`, `sin:amp,freq`,
//! `cos:amp,freq`, `tanh:amp,scale`, `bump:amp,width`, `tsin:amp,freq`,
//! `checkerboard:cell`, `signosc`, `fatcantor:depth`,
//! `randfield:cx,ct,seed`, `holder:beta,scale,kappa,cap,q1,q2`.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use libm::{cos, exp, fabs, floor, pow, sin, tanh};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Closed-form smooth fixtures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smooth {
    Zero,
    Constant { c: f64 },
    /// `slope · x`; unbounded, used for exact-algebra checks.
    Linear { slope: f64 },
    Sin { amp: f64, freq: f64 },
    Cos { amp: f64, freq: f64 },
    Tanh { amp: f64, scale: f64 },
    /// `amp · exp(-(x / width)^2)`.
    Bump { amp: f64, width: f64 },
    /// `amp · sin(2π t) · sin(freq · x)`.
    TimeSin { amp: f64, freq: f64 },
}

/// Bounded Borel fixtures with values in `{-1, 0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Borel {
    /// `+1` when `Σ⌊x_j / cell⌋ + ⌊t / cell⌋` is even, else `-1`.
    Checkerboard { cell: f64 },
    /// `sign(sin(1/x))`, zero at `x = 0`.
    SignOsc,
    /// `+1` on a depth-`depth` Smith–Volterra–Cantor set (periodised with
    /// period 1), `-1` off it.
    FatCantor { depth: u32 },
    /// Frozen random ±1 on a `cx × ct` lattice.
    RandomField { cx: f64, ct: f64, seed: u64 },
}

/// Time envelope `m(t) = min(cap, scale · t^{-kappa})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub scale: f64,
    pub kappa: f64,
    pub cap: f64,
}

impl Envelope {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.cap;
        }
        (self.scale * pow(t, -self.kappa)).min(self.cap)
    }

    /// `‖m‖_{L^q[0, T]}`, analytic. `q = ∞` gives the sup.
    pub fn lq_norm(&self, q: f64, horizon: f64) -> f64 {
        if q.is_infinite() {
            return self.at(0.0).max(self.at(horizon));
        }
        // m = cap on [0, t*], scale t^{-kappa} after.
        let t_star = if self.kappa > 0.0 {
            pow(self.scale / self.cap, 1.0 / self.kappa)
        } else if self.scale >= self.cap {
            f64::INFINITY
        } else {
            0.0
        };
        let t_cut = t_star.min(horizon);
        let mut integral = pow(self.cap, q) * t_cut;
        if t_cut < horizon {
            let e = 1.0 - self.kappa * q;
            let sq = pow(self.scale, q);
            integral += if fabs(e) < 1e-15 {
                sq * libm::log(horizon / t_cut)
            } else {
                sq * (pow(horizon, e) - pow(t_cut, e)) / e
            };
        }
        pow(integral, 1.0 / q)
    }
}

/// `b(t, x) = m(t) · sign(x) · min(|x|, 1)^β`.
///
/// `|b| ≤ m(t) =: M₁(t)` and `|b(t,x) - b(t,y)| ≤ 2^{1-β} m(t) |x-y|^β =:
/// M₂(t) |x-y|^β`. `q1`, `q2` are the integrability exponents declared for
/// `M₁`, `M₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hoelder {
    pub beta: f64,
    pub envelope: Envelope,
    pub q1: f64,
    pub q2: f64,
}

impl Hoelder {
    #[inline]
    fn shape(&self, x: f64) -> f64 {
        let a = fabs(x).min(1.0);
        let v = pow(a, self.beta);
        if x < 0.0 {
            -v
        } else if x > 0.0 {
            v
        } else {
            0.0
        }
    }

    pub fn m1(&self, t: f64) -> f64 {
        self.envelope.at(t)
    }

    pub fn m2(&self, t: f64) -> f64 {
        pow(2.0, 1.0 - self.beta) * self.envelope.at(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind {
    Smooth(Smooth),
    Hoelder(Hoelder),
    Borel(Borel),
    /// `inner · 1{|x|_∞ < radius}`.
    Truncated { inner: Box<DriftKind>, radius: f64 },
    /// Spatial convolution with a compactly supported bump of half-width
    /// `width` (d = 1).
    Mollified { inner: Box<DriftKind>, width: f64 },
}

/// A drift on `[0, horizon] × R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub dim: usize,
    pub horizon: f64,
    pub kind: DriftKind,
}

/// Exponent metadata `(β, q₁, q₂)` for the Hölder-drift uniqueness
/// conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoelderMeta {
    pub beta: f64,
    pub q1: f64,
    pub q2: f64,
}

/// Conjugate exponent `p` with `1/p + 1/q = 1`.
pub fn conjugate(q: f64) -> f64 {
    if q.is_infinite() {
        1.0
    } else if q <= 1.0 {
        f64::INFINITY
    } else {
        q / (q - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub p1: f64,
    pub p2: f64,
    /// `β/p₁ + 1/p₂`.
    pub condition3_value: f64,
    /// `M₁ ∈ L^{q₁}` (finite analytic norm, or declared metadata).
    pub condition1: bool,
    /// `β > 0` and `M₂ ∈ L^{q₂}`.
    pub condition2: bool,
    /// `q₁ ≥ q₂ > 2`, `β > 0`, `β/p₁ + 1/p₂ > 1`.
    pub condition3: bool,
    pub holds: bool,
}

impl HoelderMeta {
    pub fn report(&self) -> ConditionReport {
        self.report_with_norms(true, true)
    }

    fn report_with_norms(&self, m1_ok: bool, m2_ok: bool) -> ConditionReport {
        let p1 = conjugate(self.q1);
        let p2 = conjugate(self.q2);
        let value = self.beta / p1 + 1.0 / p2;
        let condition3 = self.q1 >= self.q2 && self.q2 > 2.0 && self.beta > 0.0 && value > 1.0;
        let condition1 = m1_ok;
        let condition2 = self.beta > 0.0 && m2_ok;
        ConditionReport {
            p1,
            p2,
            condition3_value: value,
            condition1,
            condition2,
            condition3,
            holds: condition1 && condition2 && condition3,
        }
    }
}

#[inline]
fn parity_sign(s: i64) -> f64 {
    if s.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn fat_cantor_member(y: f64, depth: u32) -> bool {
    let (mut a, mut b) = (0.0, 1.0);
    let mut removed = 0.25;
    for _ in 0..depth {
        let mid = 0.5 * (a + b);
        let half = 0.5 * removed;
        if fabs(y - mid) < half {
            return false;
        }
        if y < mid {
            b = mid - half;
        } else {
            a = mid + half;
        }
        removed *= 0.25;
    }
    true
}

const MOLLIFIER_NODES: usize = 32;

fn mollifier_weights() -> [(f64, f64); MOLLIFIER_NODES] {
    let mut out = [(0.0, 0.0); MOLLIFIER_NODES];
    let mut total = 0.0;
    for (k, slot) in out.iter_mut().enumerate() {
        let y = -1.0 + (2.0 * k as f64 + 1.0) / MOLLIFIER_NODES as f64;
        let w = exp(-1.0 / (1.0 - y * y));
        *slot = (y, w);
        total += w;
    }
    for slot in out.iter_mut() {
        slot.1 /= total;
    }
    out
}

impl DriftKind {
    /// Scalar profile for coordinatewise families; `x` is the coordinate.
    fn scalar(&self, t: f64, x: f64) -> f64 {
        match self {
            DriftKind::Smooth(s) => match *s {
                Smooth::Zero => 0.0,
                Smooth::Constant { c } => c,
                Smooth::Linear { slope } => slope * x,
                Smooth::Sin { amp, freq } => amp * sin(freq * x),
                Smooth::Cos { amp, freq } => amp * cos(freq * x),
                Smooth::Tanh { amp, scale } => amp * tanh(x / scale),
                Smooth::Bump { amp, width } => {
                    let z = x / width;
                    amp * exp(-z * z)
                }
                Smooth::TimeSin { amp, freq } => amp * sin(2.0 * PI * t) * sin(freq * x),
            },
            DriftKind::Hoelder(h) => h.m1(t) * h.shape(x),
            DriftKind::Borel(b) => match *b {
                Borel::Checkerboard { cell } => {
                    parity_sign(floor(x / cell) as i64 + floor(t / cell) as i64)
                }
                Borel::SignOsc => {
                    if x == 0.0 {
                        0.0
                    } else {
                        let s = sin(1.0 / x);
                        if s > 0.0 {
                            1.0
                        } else if s < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                }
                Borel::FatCantor { depth } => {
                    if fat_cantor_member(x - floor(x), depth) {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Borel::RandomField { cx, ct, seed } => {
                    let i = floor(x / cx) as i64 as u64;
                    let j = floor(t / ct) as i64 as u64;
                    if rng::key(&[tag::FIELD, seed, i, j]) & 1 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            },
            DriftKind::Truncated { inner, radius } => {
                if fabs(x) < *radius {
                    inner.scalar(t, x)
                } else {
                    0.0
                }
            }
            DriftKind::Mollified { inner, width } => {
                let mut acc = 0.0;
                for (y, w) in mollifier_weights() {
                    acc += w * inner.scalar(t, x - width * y);
                }
                acc
            }
        }
    }

    fn family_name(&self) -> &'static str {
        match self {
            DriftKind::Smooth(_) => "smooth",
            DriftKind::Hoelder(_) => "hoelder",
            DriftKind::Borel(_) => "borel",
            DriftKind::Truncated { .. } => "truncated",
            DriftKind::Mollified { .. } => "mollified",
        }
    }

    fn bound(&self) -> f64 {
        match self {
            DriftKind::Smooth(s) => match *s {
                Smooth::Zero => 0.0,
                Smooth::Constant { c } => fabs(c),
                Smooth::Linear { slope } => {
                    if slope == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                }
                Smooth::Sin { amp, .. }
                | Smooth::Cos { amp, .. }
                | Smooth::Tanh { amp, .. }
                | Smooth::Bump { amp, .. }
                | Smooth::TimeSin { amp, .. } => fabs(amp),
            },
            DriftKind::Hoelder(h) => h.envelope.cap,
            DriftKind::Borel(_) => 1.0,
            DriftKind::Truncated { inner, .. } | DriftKind::Mollified { inner, .. } => inner.bound(),
        }
    }

    /// Derivative of the scalar profile in `x`.
    fn scalar_derivative(&self, t: f64, x: f64) -> Option<f64> {
        let DriftKind::Smooth(s) = self else {
            return None;
        };
        Some(match *s {
            Smooth::Zero | Smooth::Constant { .. } => 0.0,
            Smooth::Linear { slope } => slope,
            Smooth::Sin { amp, freq } => amp * freq * cos(freq * x),
            Smooth::Cos { amp, freq } => -amp * freq * sin(freq * x),
            Smooth::Tanh { amp, scale } => {
                let th = tanh(x / scale);
                amp * (1.0 - th * th) / scale
            }
            Smooth::Bump { amp, width } => {
                let z = x / width;
                -2.0 * amp * z / width * exp(-z * z)
            }
            Smooth::TimeSin { amp, freq } => amp * freq * sin(2.0 * PI * t) * cos(freq * x),
        })
    }

    /// `sup |∂b/∂x|` for smooth fixtures.
    fn lipschitz(&self) -> Option<f64> {
        let DriftKind::Smooth(s) = self else {
            return None;
        };
        Some(match *s {
            Smooth::Zero | Smooth::Constant { .. } => 0.0,
            Smooth::Linear { slope } => fabs(slope),
            Smooth::Sin { amp, freq } | Smooth::Cos { amp, freq } | Smooth::TimeSin { amp, freq } => {
                fabs(amp * freq)
            }
            Smooth::Tanh { amp, scale } => fabs(amp / scale),
            // max of 2|z| e^{-z^2} is sqrt(2/e).
            Smooth::Bump { amp, width } => fabs(amp / width) * libm::sqrt(2.0 / core::f64::consts::E),
        })
    }

    fn support_radius(&self) -> Option<f64> {
        match self {
            DriftKind::Truncated { inner, radius } => {
                Some(inner.support_radius().map_or(*radius, |r| r.min(*radius)))
            }
            DriftKind::Mollified { inner, width } => inner.support_radius().map(|r| r + width),
            DriftKind::Smooth(Smooth::Zero) => Some(0.0),
            _ => None,
        }
    }

    fn is_spatially_constant(&self) -> bool {
        match self {
            DriftKind::Smooth(Smooth::Zero | Smooth::Constant { .. }) => true,
            DriftKind::Mollified { inner, .. } => inner.is_spatially_constant(),
            _ => false,
        }
    }
}

impl DriftSpec {
    pub fn new(dim: usize, kind: DriftKind) -> Self {
        Self {
            dim,
            horizon: 1.0,
            kind,
        }
    }

    pub fn scalar(kind: DriftKind) -> Self {
        Self::new(1, kind)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn truncated(self, radius: f64) -> Self {
        Self {
            kind: DriftKind::Truncated {
                inner: Box::new(self.kind),
                radius,
            },
            ..self
        }
    }

    pub fn mollified(self, width: f64) -> Result<Self> {
        if self.dim != 1 {
            return Err(Error::UnsupportedDimension {
                expected: 1,
                got: self.dim,
            });
        }
        Ok(Self {
            kind: DriftKind::Mollified {
                inner: Box::new(self.kind),
                width,
            },
            ..self
        })
    }

    /// Sup-norm bound of `b` (max-norm over coordinates).
    pub fn bound(&self) -> f64 {
        self.kind.bound()
    }

    pub fn family_name(&self) -> &'static str {
        self.kind.family_name()
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self.kind, DriftKind::Smooth(_))
    }

    pub fn is_spatially_constant(&self) -> bool {
        self.kind.is_spatially_constant()
    }

    /// Spatial radius outside which `b` vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        self.kind.support_radius()
    }

    /// Global Lipschitz constant in `x` for smooth fixtures.
    pub fn lipschitz(&self) -> Option<f64> {
        self.kind.lipschitz()
    }

    /// Fast scalar evaluation of the first component for `d = 1` paths.
    /// No domain check.
    #[inline]
    pub fn eval1(&self, t: f64, x: f64) -> f64 {
        self.kind.scalar(t, x)
    }

    /// Evaluates into `out` without domain checks.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if let Some(v) = self.checkerboard_value(t, x) {
            out.iter_mut().for_each(|o| *o = v);
            return;
        }
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.kind.scalar(t, xi);
        }
    }

    /// Multi-coordinate checkerboard (possibly truncated) is the one
    /// non-coordinatewise family.
    fn checkerboard_value(&self, t: f64, x: &[f64]) -> Option<f64> {
        if self.dim == 1 {
            return None;
        }
        let (cell, radius) = match &self.kind {
            DriftKind::Borel(Borel::Checkerboard { cell }) => (*cell, f64::INFINITY),
            DriftKind::Truncated { inner, radius } => match **inner {
                DriftKind::Borel(Borel::Checkerboard { cell }) => (cell, *radius),
                _ => return None,
            },
            _ => return None,
        };
        if x.iter().any(|xi| fabs(*xi) >= radius) {
            return Some(0.0);
        }
        let s: i64 = x.iter().map(|xi| floor(xi / cell) as i64).sum::<i64>() + floor(t / cell) as i64;
        Some(parity_sign(s))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// `b(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        if x.len() != self.dim {
            return Err(Error::UnsupportedDimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, &mut out);
        Ok(out)
    }

    /// Jacobian `∂b_i/∂x_j` (diagonal for the coordinatewise fixtures),
    /// row-major `dim × dim`.
    pub fn spatial_derivative(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        if !self.is_smooth() {
            return Err(Error::UnsupportedFamily {
                family: self.family_name(),
            });
        }
        let d = self.dim;
        let mut jac = vec![0.0; d * d];
        for i in 0..d {
            jac[i * d + i] = self.kind.scalar_derivative(t, x[i]).unwrap_or(0.0);
        }
        Ok(jac)
    }

    /// `∂b_1/∂x_1` for hot loops; `None` for non-smooth families.
    #[inline]
    pub fn derivative1(&self, t: f64, x: f64) -> Option<f64> {
        self.kind.scalar_derivative(t, x)
    }

    /// Hölder exponent metadata. Smooth fixtures with a finite Lipschitz
    /// constant are `β = 1` with bounded envelopes (`q = ∞`).
    pub fn hoelder_meta(&self) -> Option<HoelderMeta> {
        match &self.kind {
            DriftKind::Hoelder(h) => Some(HoelderMeta {
                beta: h.beta,
                q1: h.q1,
                q2: h.q2,
            }),
            DriftKind::Smooth(_) if self.lipschitz().is_some_and(f64::is_finite) && self.bound().is_finite() => {
                Some(HoelderMeta {
                    beta: 1.0,
                    q1: f64::INFINITY,
                    q2: f64::INFINITY,
                })
            }
            _ => None,
        }
    }

    /// Checks the Hölder-drift uniqueness conditions: `|b| ≤ M₁ ∈ L^{q₁}`,
    /// `|b(t,x) - b(t,y)| ≤ M₂(t)|x - y|^β` with `M₂ ∈ L^{q₂}`, and
    /// `q₁ ≥ q₂ > 2`, `β/p₁ + 1/p₂ > 1`.
    pub fn check_hoelder_conditions(&self) -> Result<ConditionReport> {
        let meta = self.hoelder_meta().ok_or(Error::Metadata("drift has no Hölder metadata (β, q₁, q₂)"))?;
        let (m1_ok, m2_ok) = match &self.kind {
            DriftKind::Hoelder(h) => {
                let n1 = h.envelope.lq_norm(h.q1, self.horizon);
                let n2 = pow(2.0, 1.0 - h.beta) * h.envelope.lq_norm(h.q2, self.horizon);
                (n1.is_finite(), n2.is_finite())
            }
            _ => (true, true),
        };
        Ok(meta.report_with_norms(m1_ok, m2_ok))
    }

    /// Axis-aligned boxes `(t0, t1, x0, x1)` covering the points within
    /// `width` of a discontinuity, restricted to `|x| ≤ radius`.
    pub fn discontinuity_boxes(&self, width: f64, radius: f64) -> Option<Vec<[f64; 4]>> {
        if self.dim != 1 {
            return None;
        }
        let (cx, ct) = match &self.kind {
            DriftKind::Borel(Borel::Checkerboard { cell }) => (*cell, *cell),
            DriftKind::Borel(Borel::RandomField { cx, ct, .. }) => (*cx, *ct),
            _ => return None,
        };
        let mut boxes = Vec::new();
        let kmax = (radius / cx) as i64 + 1;
        for k in -kmax..=kmax {
            let x = k as f64 * cx;
            boxes.push([0.0, self.horizon, x - width, x + width]);
        }
        let jmax = (self.horizon / ct) as i64;
        for j in 1..=jmax {
            let t = j as f64 * ct;
            if t < self.horizon {
                boxes.push([t - width, t + width, -radius - width, radius + width]);
            }
        }
        Some(boxes)
    }

    /// Parses an identifier (module docs) into a one-dimensional spec.
    pub fn parse(id: &str) -> Result<Self> {
        let err = || Error::DriftParse(id.to_string());
        let mut parts = id.split('@');
        let head = parts.next().ok_or_else(err)?.trim();
        let (name, params) = match head.split_once(':') {
            Some((n, p)) => (n, p),
            None => (head, ""),
        };
        let mut kv: Vec<(&str, f64)> = Vec::new();
        for p in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = p.split_once('=').ok_or_else(err)?;
            let v: f64 = v.trim().parse().map_err(|_| err())?;
            kv.push((k.trim(), v));
        }
        for (k, _) in &kv {
            let allowed: &[&str] = match name {
                "zero" | "signosc" => &[],
                "const" => &["c"],
                "linear" => &["slope"],
                "sin" | "cos" | "tsin" => &["amp", "freq"],
                "tanh" => &["amp", "scale"],
                "bump" => &["amp", "width"],
                "checkerboard" => &["cell"],
                "fatcantor" => &["depth"],
                "randfield" => &["cx", "ct", "seed"],
                "holder" => &["beta", "scale", "kappa", "cap", "q1", "q2"],
                _ => return Err(err()),
            };
            if !allowed.contains(k) {
                return Err(err());
            }
        }
        let get = |k: &str, default: f64| kv.iter().find(|(kk, _)| *kk == k).map_or(default, |(_, v)| *v);
        let kind = match name {
            "zero" => DriftKind::Smooth(Smooth::Zero),
            "const" => DriftKind::Smooth(Smooth::Constant { c: get("c", 1.0) }),
            "linear" => DriftKind::Smooth(Smooth::Linear { slope: get("slope", 1.0) }),
            "sin" => DriftKind::Smooth(Smooth::Sin {
                amp: get("amp", 1.0),
                freq: get("freq", 1.0),
            }),
            "cos" => DriftKind::Smooth(Smooth::Cos {
                amp: get("amp", 1.0),
                freq: get("freq", 1.0),
            }),
            "tsin" => DriftKind::Smooth(Smooth::TimeSin {
                amp: get("amp", 1.0),
                freq: get("freq", 1.0),
            }),
            "tanh" => DriftKind::Smooth(Smooth::Tanh {
                amp: get("amp", 1.0),
                scale: get("scale", 1.0),
            }),
            "bump" => DriftKind::Smooth(Smooth::Bump {
                amp: get("amp", 1.0),
                width: get("width", 1.0),
            }),
            "checkerboard" => DriftKind::Borel(Borel::Checkerboard { cell: get("cell", 0.1) }),
            "signosc" => DriftKind::Borel(Borel::SignOsc),
            "fatcantor" => DriftKind::Borel(Borel::FatCantor {
                depth: get("depth", 6.0) as u32,
            }),
            "randfield" => DriftKind::Borel(Borel::RandomField {
                cx: get("cx", 0.05),
                ct: get("ct", 0.125),
                seed: get("seed", 1.0) as u64,
            }),
            "holder" => DriftKind::Hoelder(Hoelder {
                beta: get("beta", 0.6),
                envelope: Envelope {
                    scale: get("scale", 0.5),
                    kappa: get("kappa", 0.2),
                    cap: get("cap", 2.0),
                },
                q1: get("q1", 4.0),
                q2: get("q2", 4.0),
            }),
            _ => return Err(err()),
        };
        let mut spec = DriftSpec::scalar(kind);
        for m in parts {
            let (k, v) = m.split_once('=').ok_or_else(err)?;
            let v: f64 = v.trim().parse().map_err(|_| err())?;
            spec = match k.trim() {
                "N" => spec.truncated(v),
                "moll" => spec.mollified(v)?,
                _ => return Err(err()),
            };
        }
        match &spec.kind {
            DriftKind::Borel(Borel::Checkerboard { cell }) if !(*cell > 0.0) => return Err(err()),
            _ => {}
        }
        Ok(spec)
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }
}

fn fmt_kind(kind: &DriftKind, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match kind {
        DriftKind::Smooth(s) => match *s {
            Smooth::Zero => write!(f, "zero"),
            Smooth::Constant { c } => write!(f, "const:c={c}"),
            Smooth::Linear { slope } => write!(f, "linear:slope={slope}"),
            Smooth::Sin { amp, freq } => write!(f, "sin:amp={amp},freq={freq}"),
            Smooth::Cos { amp, freq } => write!(f, "cos:amp={amp},freq={freq}"),
            Smooth::Tanh { amp, scale } => write!(f, "tanh:amp={amp},scale={scale}"),
            Smooth::Bump { amp, width } => write!(f, "bump:amp={amp},width={width}"),
            Smooth::TimeSin { amp, freq } => write!(f, "tsin:amp={amp},freq={freq}"),
        },
        DriftKind::Hoelder(h) => write!(
            f,
            "holder:beta={},scale={},kappa={},cap={},q1={},q2={}",
            h.beta, h.envelope.scale, h.envelope.kappa, h.envelope.cap, h.q1, h.q2
        ),
        DriftKind::Borel(b) => match *b {
            Borel::Checkerboard { cell } => write!(f, "checkerboard:cell={cell}"),
            Borel::SignOsc => write!(f, "signosc"),
            Borel::FatCantor { depth } => write!(f, "fatcantor:depth={depth}"),
            Borel::RandomField { cx, ct, seed } => write!(f, "randfield:cx={cx},ct={ct},seed={seed}"),
        },
        DriftKind::Truncated { inner, radius } => {
            fmt_kind(inner, f)?;
            write!(f, "@N={radius}")
        }
        DriftKind::Mollified { inner, width } => {
            fmt_kind(inner, f)?;
            write!(f, "@moll={width}")
        }
    }
}

impl fmt::Display for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_kind(&self.kind, f)
    }
}

/// The five bounded smooth fixtures (`‖b‖_∞ = 1`).
pub fn smooth_suite() -> Vec<DriftSpec> {
    ["sin", "cos", "tanh", "bump", "tsin"]
        .iter()
        .map(|id| DriftSpec::parse(id).expect("catalog id"))
        .collect()
}

/// The bounded Borel fixtures.
pub fn borel_suite() -> Vec<DriftSpec> {
    [
        "checkerboard:cell=0.1",
        "signosc",
        "fatcantor:depth=6",
        "randfield:cx=0.05,ct=0.125,seed=1",
    ]
    .iter()
    .map(|id| DriftSpec::parse(id).expect("catalog id"))
    .collect()
}

/// Hölder fixture satisfying the uniqueness conditions
/// (`β = 0.6`, `q₁ = q₂ = 4`, `β/p₁ + 1/p₂ = 1.2`).
pub fn hoelder_fixture() -> DriftSpec {
    DriftSpec::parse("holder:beta=0.6,scale=0.5,kappa=0.2,cap=2,q1=4,q2=4").expect("catalog id")
}

/// Every bounded catalog fixture.
pub fn catalog() -> Vec<DriftSpec> {
    let mut v = vec![DriftSpec::parse("zero").expect("catalog id"), DriftSpec::parse("const:c=0.5").expect("catalog id")];
    v.extend(smooth_suite());
    v.extend(borel_suite());
    v.push(hoelder_fixture());
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hoelder_params(spec: &DriftSpec) -> Hoelder {
        match spec.kind {
            DriftKind::Hoelder(h) => h,
            _ => unreachable!(),
        }
    }

    #[test]
    fn constant_is_constant() {
        let b = DriftSpec::parse("const:c=0.3").unwrap();
        for &(t, x) in &[(0.0, -5.0), (0.5, 0.0), (1.0, 3.0)] {
            assert_eq!(b.eval(t, &[x]).unwrap(), vec![0.3]);
        }
    }

    #[test]
    fn checkerboard_flips_across_a_cell_boundary() {
        let b = DriftSpec::parse("checkerboard:cell=0.1").unwrap();
        assert_eq!(b.eval1(0.05, 0.05), 1.0);
        assert_eq!(b.eval1(0.05, 0.15), -1.0);
        assert_eq!(b.eval1(0.15, 0.15), 1.0);
        assert_eq!(b.eval1(0.05, -0.05), -1.0);
    }

    #[test]
    fn truncation_vanishes_outside_radius() {
        let b = DriftSpec::parse("const:c=1@N=2").unwrap();
        assert_eq!(b.eval1(0.5, 3.0), 0.0);
        assert_eq!(b.eval1(0.5, -3.0), 0.0);
        assert_eq!(b.eval1(0.5, 1.9), 1.0);
        let b2 = DriftSpec::parse("checkerboard:cell=0.1@N=2").unwrap().with_dim(2);
        assert_eq!(b2.eval(0.5, &[0.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn time_outside_horizon_is_a_domain_error() {
        let b = DriftSpec::parse("sin").unwrap();
        assert!(matches!(b.eval(1.5, &[0.0]), Err(Error::Domain { .. })));
        assert!(matches!(b.eval(-0.1, &[0.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn derivatives() {
        let lin = DriftSpec::parse("linear").unwrap();
        assert_eq!(lin.spatial_derivative(0.3, &[7.0]).unwrap(), vec![1.0]);
        let c = DriftSpec::parse("const:c=2").unwrap();
        assert_eq!(c.spatial_derivative(0.3, &[7.0]).unwrap(), vec![0.0]);
        let h = 1e-5;
        for b in smooth_suite() {
            for i in 0..50 {
                let x = -3.0 + 0.123 * i as f64;
                let t = 0.37;
                let fd = (b.eval1(t, x + h) - b.eval1(t, x - h)) / (2.0 * h);
                let d = b.spatial_derivative(t, &[x]).unwrap()[0];
                assert!((fd - d).abs() < 1e-8, "{b} at {x}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn derivative_of_non_smooth_family_is_unsupported() {
        let b = DriftSpec::parse("checkerboard:cell=0.1").unwrap();
        assert!(matches!(b.spatial_derivative(0.0, &[0.0]), Err(Error::UnsupportedFamily { .. })));
    }

    #[test]
    fn condition_substitutions() {
        let lip = HoelderMeta {
            beta: 1.0,
            q1: f64::INFINITY,
            q2: f64::INFINITY,
        }
        .report();
        assert_eq!(lip.condition3_value, 2.0);
        assert!(lip.holds);

        let bad = HoelderMeta {
            beta: 0.2,
            q1: 4.0,
            q2: 2.5,
        }
        .report();
        assert!((bad.p1 - 4.0 / 3.0).abs() < 1e-15);
        assert!((bad.p2 - 5.0 / 3.0).abs() < 1e-15);
        assert!((bad.condition3_value - 0.75).abs() < 1e-12);
        assert!(!bad.holds);

        for beta in [0.1, 0.5, 1.0] {
            let r = HoelderMeta { beta, q1: 8.0, q2: 2.0 }.report();
            assert!(!r.condition3 && !r.holds);
        }
    }

    #[test]
    fn fixture_conditions_hold_and_missing_metadata_errors() {
        let r = hoelder_fixture().check_hoelder_conditions().unwrap();
        assert!(r.holds);
        assert!((r.condition3_value - 1.2).abs() < 1e-12);
        assert!(sin_spec().check_hoelder_conditions().unwrap().holds);
        let cb = DriftSpec::parse("checkerboard").unwrap();
        assert!(matches!(cb.check_hoelder_conditions(), Err(Error::Metadata(_))));
    }

    fn sin_spec() -> DriftSpec {
        DriftSpec::parse("sin").unwrap()
    }

    #[test]
    fn envelope_norm_matches_quadrature() {
        let e = Envelope {
            scale: 0.5,
            kappa: 0.2,
            cap: 2.0,
        };
        for q in [2.5, 4.0] {
            let n = 2_000_000;
            let mut acc = 0.0;
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                acc += e.at(t).powf(q) / n as f64;
            }
            let numeric = acc.powf(1.0 / q);
            assert!((numeric - e.lq_norm(q, 1.0)).abs() < 1e-6, "{numeric}");
        }
        // Uncapped part reaches the cap only at t = (0.5/2)^{5}.
        let e2 = Envelope {
            scale: 1.0,
            kappa: 0.5,
            cap: 1e300,
        };
        // ∫ t^{-q/2} = 1/(1 - q/2) for q < 2.
        assert!((e2.lq_norm(1.0, 1.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fat_cantor_measure() {
        let b = DriftSpec::parse("fatcantor:depth=6").unwrap();
        let n = 1 << 20;
        let inside = (0..n).filter(|i| b.eval1(0.0, (*i as f64 + 0.5) / n as f64) > 0.0).count();
        let expected = 0.5 + 2f64.powi(-7);
        assert!((inside as f64 / n as f64 - expected).abs() < 1e-4);
    }

    #[test]
    fn identifiers_round_trip() {
        for b in catalog() {
            assert_eq!(DriftSpec::parse(&b.to_string()).unwrap(), b);
        }
        let t = DriftSpec::parse("checkerboard:cell=0.1@N=2@moll=0.0625").unwrap();
        assert_eq!(DriftSpec::parse(&t.to_string()).unwrap(), t);
        assert!(DriftSpec::parse("nope").is_err());
        assert!(DriftSpec::parse("sin:bogus=1").is_err());
        assert!(DriftSpec::parse("sin:amp").is_err());
        assert!(DriftSpec::parse("sin@X=1").is_err());
    }

    #[test]
    fn suites_are_normalised() {
        for b in smooth_suite().into_iter().chain(borel_suite()) {
            assert_eq!(b.bound(), 1.0, "{b}");
        }
    }

    #[test]
    fn mollified_checkerboard_is_continuous_away_from_the_kernel_scale() {
        let b = DriftSpec::parse("checkerboard:cell=0.1@moll=0.01").unwrap();
        assert!((b.eval1(0.05, 0.05) - 1.0).abs() < 1e-12);
        let v = b.eval1(0.05, 0.1);
        assert!(v.abs() < 0.1, "{v}");
    }

    proptest! {
        #[test]
        fn catalog_respects_bound(t in 0.0f64..=1.0, x in -10.0f64..10.0) {
            for b in catalog() {
                prop_assert!(b.eval1(t, x).abs() <= b.bound(), "{}", b);
            }
        }

        #[test]
        fn hoelder_envelope(t in 0.0f64..=1.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let b = hoelder_fixture();
            let h = hoelder_params(&b);
            let lhs = (b.eval1(t, x) - b.eval1(t, y)).abs();
            prop_assert!(lhs <= h.m2(t) * (x - y).abs().powf(h.beta) + 1e-12);
            prop_assert!(b.eval1(t, x).abs() <= h.m1(t));
        }

        #[test]
        fn truncation_is_exact(r in 0.1f64..5.0, x in -10.0f64..10.0) {
            let b = DriftSpec::parse("sin").unwrap().truncated(r);
            if x.abs() >= r {
                prop_assert_eq!(b.eval1(0.5, x), 0.0);
            } else {
                prop_assert_eq!(b.eval1(0.5, x), libm::sin(x));
            }
        }
    }
}
