use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x}, {y}) lies outside the area [0, {side})")]
    OutOfArea { x: f64, y: f64, side: f64 },

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("LoS probability {0} outside [0, 1)")]
    InvalidProbability(f64),

    #[error("observation covariance is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("zero channel estimate on link (user {user}, AP {ap})")]
    ZeroEstimate { user: usize, ap: usize },

    #[error("user {0} has zero desired gain")]
    DegenerateUser(usize),

    #[error("constraint {index} is not convex (min eigenvalue {min_eig:e})")]
    NonConvex { index: usize, min_eig: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown metric '{0}'")]
    UnknownMetric(String),

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
