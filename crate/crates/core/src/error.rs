//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters caught before any computation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The schedule coefficients make a field conversion undefined at this time.
    #[error("singular conversion at t = {t}: {what}")]
    SingularTime { t: f64, what: &'static str },

    /// The oracle does not provide an optional capability a caller needs.
    #[error("oracle does not provide {0}")]
    MissingCapability(&'static str),

    /// A state stopped being finite during integration. Carries the last
    /// finite state so the caller can diagnose where things blew up.
    #[error("non-finite state at t = {t}{}", match .index { Some(i) => format!(" (element {i})"), None => String::new() })]
    Diverged {
        t: f64,
        index: Option<usize>,
        last_finite: Vec<f64>,
    },

    /// Central-difference tangent vanished, so a perpendicular component
    /// is undefined.
    #[error("degenerate tangent at image {index}")]
    DegenerateTangent { index: usize },

    /// A rotation increment has angle within 1e-6 of pi, where the log map
    /// branch is ambiguous.
    #[error("rotation increment {index} has angle {angle} within 1e-6 of pi; log branch ambiguous")]
    BranchAmbiguity { index: usize, angle: f64 },

    /// An iterative solve ran out of its iteration budget.
    #[error("iteration budget exceeded; residual {residual}")]
    BudgetExceeded { residual: f64 },

    /// Training loss stopped being finite.
    #[error("training diverged at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    #[error("malformed row {line}: {what}")]
    MalformedRow { line: usize, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
