use thiserror::Error;

/// Errors raised by the estimators, generators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HteError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {index} = {value} lies outside [0, 1]")]
    CoordinateOutOfRange { index: usize, value: f64 },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("requested {k} neighbors but only {available} points are available")]
    TooManyNeighbors { k: usize, available: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("smoothness {beta} exceeds 1; {context}")]
    SmoothnessTooHigh { beta: f64, context: &'static str },

    #[error("duplicate abscissa or covariate at position {index}")]
    DuplicatePoint { index: usize },

    #[error("value specification is not Hölder-feasible: pair ({i}, {j}) violates the bound by {excess:e}")]
    InfeasibleSpec { i: usize, j: usize, excess: f64 },

    #[error("data does not match the grid design: {0}")]
    DesignMismatch(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate rate grid: {0}")]
    DegenerateGrid(String),

    #[error("I/O or format error: {0}")]
    Io(String),

    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<HteError>,
    },
}

impl From<std::io::Error> for HteError {
    fn from(e: std::io::Error) -> Self {
        HteError::Io(e.to_string())
    }
}

impl From<csv::Error> for HteError {
    fn from(e: csv::Error) -> Self {
        HteError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HteError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> HteError {
    HteError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
