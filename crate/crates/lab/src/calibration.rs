//! Frozen reference values for the exponential-moment experiment.
//!
//! The references are produced once by `cargo run --release -p rdl-lab
//! --example calibrate` with [`CALIBRATION_SEED`] and committed under
//! `tests/fixtures/`. Checks rerun the estimator with a different seed.

use std::path::Path;

use rdl_core::drift::{catalog, DriftSpec};
use rdl_core::functionals::covariation_partition;
use rdl_core::mc::{estimate_exp_moment, Executor, ExpMomentEstimate, TrialPlan};

pub const ALPHA: f64 = 0.05;
pub const LEVEL: u32 = 10;
pub const CALIBRATION_SEED: u64 = 0x00CA_11B0;
pub const CALIBRATION_TRIALS: u64 = 1_000_000;
pub const FIXTURE: &str = "tests/fixtures/exp_moment_reference.csv";

/// Catalog drifts with `‖b‖_∞ ≤ 1`.
pub fn bounded_catalog() -> Vec<DriftSpec> {
    catalog().into_iter().filter(|b| b.bound() <= 1.0).collect()
}

/// `E exp(α [b(., W), W]²)` with the covariation partition sum at [`LEVEL`].
pub fn estimate<E: Executor>(exec: &E, b: &DriftSpec, n: u64, seed: u64) -> rdl_core::Result<ExpMomentEstimate> {
    let plan = TrialPlan::new(n, seed, LEVEL);
    estimate_exp_moment(
        exec,
        |trial| covariation_partition(b, &plan.path(trial, b.dim, b.horizon)?),
        ALPHA,
        &plan,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub drift: String,
    pub estimate: f64,
    pub bootstrap_se: f64,
    pub n: u64,
}

pub fn write_fixture(path: &Path, refs: &[Reference]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["drift", "alpha", "level", "seed", "n", "estimate", "bootstrap_se"])?;
    for r in refs {
        w.write_record([
            r.drift.clone(),
            ALPHA.to_string(),
            LEVEL.to_string(),
            CALIBRATION_SEED.to_string(),
            r.n.to_string(),
            r.estimate.to_string(),
            r.bootstrap_se.to_string(),
        ])?;
    }
    w.flush()
}

pub fn read_fixture(path: &Path) -> std::io::Result<Vec<Reference>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).ok_or_else(|| bad("short record"));
        out.push(Reference {
            drift: f(0)?.to_string(),
            n: f(4)?.parse().map_err(|_| bad("n"))?,
            estimate: f(5)?.parse().map_err(|_| bad("estimate"))?,
            bootstrap_se: f(6)?.parse().map_err(|_| bad("bootstrap_se"))?,
        });
    }
    Ok(out)
}
