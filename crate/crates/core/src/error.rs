use thiserror::Error;

/// Errors raised by the vehicle model, solvers and simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("speed {speed} m/s is below the drift-model floor")]
    DegenerateSpeed { speed: f64 },

    #[error("rear longitudinal force {force} N exceeds friction limit {limit} N")]
    FrictionCircle { force: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pose is {distance:.2} m from the nearest path sample")]
    OffPath { distance: f64 },

    #[error("equilibrium solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("equilibrium solve reached the grip branch (beta = {beta:.4} rad)")]
    GripBranch { beta: f64 },

    #[error("QP is infeasible at the initial point")]
    QpInfeasible,

    #[error("QP active-set iteration limit ({0}) reached")]
    QpIterationLimit(usize),

    #[error("kernel matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,

    #[error("episode failed at step {step}: {reason}")]
    EpisodeFailed { step: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
