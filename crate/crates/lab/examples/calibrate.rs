//! Regenerates the exponential-moment reference fixture.

use std::path::Path;

use rdl_lab::calibration::{self, Reference};
use rdl_lab::Parallel;

fn main() {
    let exec = Parallel::new(0).expect("thread pool");
    let mut refs = Vec::new();
    for b in calibration::bounded_catalog() {
        let e = calibration::estimate(&exec, &b, calibration::CALIBRATION_TRIALS, calibration::CALIBRATION_SEED)
            .expect("calibration run");
        println!("{b}: {} (se {})", e.estimate, e.bootstrap_se);
        refs.push(Reference {
            drift: b.to_string(),
            estimate: e.estimate,
            bootstrap_se: e.bootstrap_se,
            n: e.n_used + e.n_flagged,
        });
    }
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(calibration::FIXTURE);
    calibration::write_fixture(&path, &refs).expect("write fixture");
}
