use thiserror::Error;

/// Errors raised anywhere in the evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("point is {distance_m:.1} m from the projection origin (limit {limit_m} m)")]
    OutOfRange { distance_m: f64, limit_m: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("time {t} s is outside the trajectory span [{start}, {end}]")]
    Extrapolation { t: f64, start: f64, end: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("no constant-speed interval found: {0}")]
    Extraction(String),

    #[error("no samples: {0}")]
    NoSamples(String),

    #[error("paired runs required: {0}")]
    Pairing(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("no ground truth in category {0}")]
    EmptyCategory(String),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
