use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature for {what} did not converge: value {value:.6e}, error estimate {error:.3e}")]
    Quadrature {
        what: &'static str,
        value: f64,
        error: f64,
    },

    #[error("integrand is not integrable at {at}: {detail}")]
    NonIntegrable { at: f64, detail: String },

    #[error("point lies outside the domain: {0}")]
    OutsideDomain(String),

    #[error("pole: {0}")]
    Pole(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("bracket search failed: {0}")]
    Bracket(String),

    #[error("step budget of {budget} exceeded")]
    StepBudget { budget: u64 },

    #[error("series diverges: {0}")]
    Divergence(String),

    #[error("empty result: {0}")]
    Empty(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
