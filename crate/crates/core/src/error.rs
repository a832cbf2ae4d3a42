use alloc::string::String;

/// Errors raised by the numerical core.
///
/// Variants map one-to-one onto the precondition and failure classes the
/// experiments distinguish (the CLI turns all of them into exit code 2
/// except [`Error::Statistical`]).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("capacity exceeded: {requested} values requested, cap is {cap}")]
    Capacity { requested: u64, cap: u64 },
    #[error("window [{r}, {u}] is not aligned to the grid nodes")]
    Alignment { r: f64, u: f64 },
    #[error("time {t} outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },
    #[error("point {x} outside the spatial domain [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },
    #[error("operation requires a smooth drift, got family `{family}`")]
    UnsupportedFamily { family: &'static str },
    #[error("operation is only implemented for dimension {expected}, got {got}")]
    UnsupportedDimension { expected: usize, got: usize },
    #[error("missing metadata: {0}")]
    Metadata(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate normalizer: h1 and h2 coincide")]
    DegenerateNormalizer,
    #[error("fit unsupported: {supported} supported bins, need at least {needed}")]
    FitUnsupported { supported: usize, needed: usize },
    #[error("too many non-finite trials: {flagged} of {total}")]
    NonFinite { flagged: u64, total: u64 },
    #[error("linear solve did not converge (residual {residual:e})")]
    Solver { residual: f64 },
    #[error("lambda search failed: grad_sup {grad_sup} > {target} at lambda = {lambda}")]
    SearchFailure { lambda: f64, grad_sup: f64, target: f64 },
    #[error("coincident grid points in pair {0}, {1}")]
    DegeneratePair(usize, usize),
    #[error("point {x} outside the grid hull [{lo}, {hi}]")]
    Hull { x: f64, lo: f64, hi: f64 },
    #[error("function is not in Lip_N: {0}")]
    NotLipschitz(String),
    #[error("experiment infeasible: {0}")]
    Infeasible(String),
    #[error("certificate inapplicable: {0}")]
    Inapplicable(String),
    #[error("invalid drift identifier `{0}`")]
    DriftParse(String),
    #[error("statistical check failed: {0}")]
    Statistical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
