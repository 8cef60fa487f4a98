use thiserror::Error;

/// A violated standing assumption on the problem data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecViolation {
    #[error("problem must have at least one alternative")]
    EmptyDimension,
    #[error(
        "per-alternative arrays disagree in length (expected {expected}, `{field}` has {found})"
    )]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("`{field}` contains a non-finite value")]
    NonFinite { field: &'static str },
    #[error("alternative {index}: low payoff {low} must be below high payoff {high}")]
    PayoffOrder { index: usize, low: f64, high: f64 },
    #[error("outside option {0} must be positive")]
    NonpositiveOutsideOption(f64),
    #[error("alternative {index}: learning cost {value} must be positive")]
    NonpositiveCost { index: usize, value: f64 },
    #[error("alternative {index}: noise level {value} must be positive")]
    NonpositiveNoise { index: usize, value: f64 },
    #[error("shift {shift} must exceed the largest terminal reward {max_reward}")]
    ShiftTooSmall { shift: f64, max_reward: f64 },
}

impl SpecViolation {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SpecViolation::EmptyDimension => "EMPTY_DIMENSION",
            SpecViolation::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            SpecViolation::NonFinite { .. } => "NON_FINITE",
            SpecViolation::PayoffOrder { .. } => "PAYOFF_ORDER",
            SpecViolation::NonpositiveOutsideOption(_) => "NONPOSITIVE_OUTSIDE_OPTION",
            SpecViolation::NonpositiveCost { .. } => "NONPOSITIVE_COST",
            SpecViolation::NonpositiveNoise { .. } => "NONPOSITIVE_NOISE",
            SpecViolation::ShiftTooSmall { .. } => "SHIFT_TOO_SMALL",
        }
    }

    /// Name of the offending problem field.
    pub fn field(&self) -> &'static str {
        match self {
            SpecViolation::EmptyDimension => "pi_high",
            SpecViolation::DimensionMismatch { field, .. } => field,
            SpecViolation::NonFinite { field } => field,
            SpecViolation::PayoffOrder { .. } => "pi_low",
            SpecViolation::NonpositiveOutsideOption(_) => "pi0",
            SpecViolation::NonpositiveCost { .. } => "cost",
            SpecViolation::NonpositiveNoise { .. } => "sigma",
            SpecViolation::ShiftTooSmall { .. } => "shift",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spec(#[from] SpecViolation),

    #[error("value {value} is outside the transform domain (must be below shift {shift})")]
    Domain { value: f64, shift: f64 },

    #[error("barrier is undefined at boundary point (coordinate {index} = {value})")]
    BarrierDomain { index: usize, value: f64 },

    #[error("axis {axis} has {nodes} nodes, at least 3 are required")]
    GridTooSmall { axis: usize, nodes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no convergence after {iterations} sweeps (residual {residual:e}, tolerance {tol:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("pair search over {pairs} node pairs exceeds the budget of {budget}")]
    PairSearchTooLarge { pairs: u128, budget: u128 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{0}")]
    Dependency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Spec(v) => v.code(),
            Error::Domain { .. } => "DOMAIN",
            Error::BarrierDomain { .. } => "BARRIER_DOMAIN",
            Error::GridTooSmall { .. } => "GRID_TOO_SMALL",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::NoConvergence { .. } => "NO_CONVERGENCE",
            Error::PairSearchTooLarge { .. } => "PAIR_SEARCH_TOO_LARGE",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Validation { .. } => "VALIDATION_ERROR",
            Error::Dependency(_) => "DEPENDENCY_ERROR",
            Error::Io(_) => "IO_ERROR",
            Error::Json(_) => "JSON_ERROR",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
