//! Standard-library companion to `rdl-core`: parallel execution, the
//! columnar binary format, CSV/JSON outputs, run manifests and the `rdl`
//! command line.

pub mod calibration;
pub mod cli;
pub mod columnar;
pub mod config;
pub mod exec;
pub mod experiments;
pub mod output;

pub use exec::Parallel;
