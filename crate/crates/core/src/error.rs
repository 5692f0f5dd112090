use thiserror::Error;

/// Errors raised by the analytic chain, the channel oracle and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter load error: missing key `{key}` in block [{block}]")]
    MissingKey { block: String, key: String },

    #[error("parameter load error: {0}")]
    Load(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance: estimate {estimate:e}, error bound {error_bound:e} after {intervals} intervals")]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        intervals: usize,
    },

    #[error("golden-section search did not converge: bracket [{lo}, {hi}] after {iterations} iterations")]
    NoConvergence { lo: f64, hi: f64, iterations: usize },

    #[error("rejection sampling budget exhausted: acceptance rate {rate:e} below {min_rate:e}; use direct conditional generation")]
    RejectionBudget { rate: f64, min_rate: f64 },

    #[error("target mean interference {target} not attainable over the swept chip times")]
    Unattainable { target: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingKey { .. }
            | Error::Load(_)
            | Error::Validation(_)
            | Error::Domain(_)
            | Error::Io(_)
            | Error::Serde(_) => 2,
            Error::Quadrature { .. } | Error::NoConvergence { .. } | Error::RejectionBudget { .. } => 3,
            Error::Unattainable { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
