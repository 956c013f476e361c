use thiserror::Error;

/// Errors raised across the model, solver, diagnostics and construction layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("convexity violation: {0}")]
    ConvexityViolation(String),

    #[error("overflow: model weight not representable beyond r = {max_radius}")]
    Overflow { max_radius: f64 },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("ambiguous regime: {0}")]
    AmbiguousRegime(String),

    #[error("startup failure: {0}")]
    StartupFailure(String),

    #[error("step size collapse at r = {radius} (u = {u}, v = {v})")]
    StepSizeCollapse { radius: f64, u: f64, v: f64 },

    #[error("non-monotone trajectory at r = {0}")]
    NonMonotone(f64),

    #[error("radius {radius} outside [0, {limit}]")]
    OutOfRange { radius: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("no plateau: {0}")]
    NoPlateau(String),

    #[error("energy converges: Euclidean critical case")]
    EuclideanCritical,

    #[error("tail divergence: tail fraction {fraction:.3e} exceeds {tolerance:.1e}")]
    TailDivergence { fraction: f64, tolerance: f64 },

    #[error("trigger timeout in stage {stage}: last Q = {last_q} at r = {radius}")]
    TriggerTimeout { stage: usize, last_q: f64, radius: f64 },

    #[error("inconsistent certificate: {0}")]
    Inconsistent(String),
}

impl Error {
    /// Short machine-readable tag, used in manifests and CLI messages.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::ConvexityViolation(_) => "ConvexityViolation",
            Error::Overflow { .. } => "Overflow",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::AmbiguousRegime(_) => "AmbiguousRegime",
            Error::StartupFailure(_) => "StartupFailure",
            Error::StepSizeCollapse { .. } => "StepSizeCollapse",
            Error::NonMonotone(_) => "NonMonotone",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::GridMismatch(_) => "GridMismatch",
            Error::RegimeMismatch(_) => "RegimeMismatch",
            Error::NoPlateau(_) => "NoPlateau",
            Error::EuclideanCritical => "EuclideanCritical",
            Error::TailDivergence { .. } => "TailDivergence",
            Error::TriggerTimeout { .. } => "TriggerTimeout",
            Error::Inconsistent(_) => "Inconsistent",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
