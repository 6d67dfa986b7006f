use thiserror::Error;

/// Errors produced by the toolkit.
///
/// `Invalid` covers rejected inputs (bad parameters, malformed files,
/// dimension mismatches); `Numerical` covers failures of the numerics
/// themselves (ill-conditioned solves, non-convergent eigensolvers,
/// exhausted retry budgets). The CLI maps these to exit codes 1 and 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
