use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },

    #[error("degenerate chart at {chart:?}: smallest singular value {sigma_min:e}")]
    DegenerateChart { chart: Vec<f64>, sigma_min: f64 },

    #[error("monomial degree {degree} exceeds the supported maximum of {max}")]
    DegreeTooHigh { degree: usize, max: usize },

    #[error("ill-conditioned interpolation system: numerical rank {rank} < {required}")]
    IllConditioned { rank: usize, required: usize },

    #[error("interpolation residual {residual:e} exceeds tolerance {tol:e}")]
    InterpolationResidual { residual: f64, tol: f64 },

    #[error("point is {period}-periodic (residual {residual:e})")]
    PeriodicPoint { period: usize, residual: f64 },

    #[error("rank-deficient differential: sigma_min/sigma_max = {ratio:e}")]
    RankDeficient { ratio: f64 },

    #[error("p-th singular value {sigma:e} is degenerate")]
    DegenerateSingularValue { sigma: f64 },

    #[error("no cloud point within eps = {eps:e} of the query")]
    EmptyBall { eps: f64 },

    #[error("box counting needs at least {required} scales, got {got}")]
    InsufficientScales { got: usize, required: usize },

    #[error("box counting needs at least {required} points, got {got}")]
    InsufficientPoints { got: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
