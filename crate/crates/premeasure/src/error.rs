use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("weights must be nonnegative and not all zero")]
    BadWeights,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("classes must partition the sample indices exactly")]
    BadClassPartition,

    #[error("grid box too small: captured mass {captured:.6} < 0.999")]
    GridTooSmall { captured: f64 },

    #[error("invalid grid: {0}")]
    BadGrid(String),

    #[error("label-axis integrand on a measure without a label axis (dimension {dim})")]
    NoLabelAxis { dim: usize },

    #[error("degenerate convex hull: sample does not span a {dim}-volume")]
    DegenerateHull { dim: usize },

    #[error("degenerate variance: var(x) = {var:.3e} is below 1e-12")]
    DegenerateVariance { var: f64 },

    #[error("partition function underflow: rescale the entropy weight")]
    PartitionUnderflow,

    #[error("sample point {index} lies outside every bin")]
    PointOutsideBins { index: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("problem size {size} exceeds the desk-scale limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("zero row in transport plan at index {0}")]
    ZeroRow(usize),

    #[error("loss flag `{0}` required by the preset is missing")]
    MissingFlag(&'static str),

    #[error("class label {0} has no points on one side of the domain pair")]
    EmptyClass(String),

    #[error("non-injective map and no reverse-direction fallback available")]
    MissingFallback,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("internal: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
