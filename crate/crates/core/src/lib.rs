//! Numerical laboratory for path-by-path uniqueness of
//! `dX_t = b(t, X_t) dt + dW_t` with bounded or Hölder drift.
//!
//! The crate is `no_std` (with `alloc`) and contains only pure algorithms:
//!
//! * [`paths`]: dyadic Brownian paths with counter-based seeding, bridge
//!   refinement, time reversal and Brownian rescaling.
//! * [`drift`]: the drift catalog with regularity metadata.
//! * [`functionals`]: derivative integrals, covariation estimators, shifted
//!   drift integrals and occupation times.
//! * [`mc`]: exponential moments, tail curves and concentration fits.
//! * [`zvonkin`]: the backward parabolic PDE, `ψ_t`, and transformed
//!   coefficients.
//! * [`flow`]: Euler flows under common noise, Hölder fits, composition
//!   residuals and two-point moments.
//! * [`nets`]: ε-nets of Lipschitz balls and the multiscale chaining
//!   experiment.
//! * [`audit`]: candidate solutions and the dyadic uniqueness certificate.
//!
//! IO, file formats, parallel execution and the command line live in the
//! companion `rdl-lab` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod audit;
pub mod drift;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod mc;
pub mod nets;
pub mod paths;
pub mod rng;
pub mod stats;
pub mod zvonkin;

pub use crate::error::{Error, Result};
