use crate::flow::FlowTrace;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box domain: {0}")]
    InvalidDomain(String),

    #[error("point {point:?} lies outside the domain")]
    PointOutsideDomain { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("conjugate gradients did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),

    #[error("mesh has no interior degrees of freedom")]
    EmptyInteriorSpace,

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("state has vanishing L2 norm")]
    ZeroState,

    #[error("unnormalized iterate has vanishing L2 norm at step {step}")]
    ZeroTilde { step: usize },

    #[error("ground-state mode stopped after {steps} steps with residual {residual:e}")]
    NotConverged {
        steps: usize,
        residual: f64,
        trace: Box<FlowTrace>,
    },

    #[error("insufficient data for a fit: {usable} usable points, at least 5 required")]
    InsufficientData { usable: usize },

    #[error("quadrature of degree {have} used where degree {need} is required")]
    QuadratureDegree { have: usize, need: usize },

    #[error("scalar field `{0}` has no gradient evaluator")]
    MissingGradient(&'static str),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownPreset(_) | Error::Json(_) | Error::InvalidDomain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
