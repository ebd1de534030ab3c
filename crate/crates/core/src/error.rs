use thiserror::Error;

use crate::optimize::OptimError;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("empty cell: {0}")]
    EmptyCell(String),

    #[error("parameters not identified: {0}")]
    NonIdentified(String),

    #[error("probability at boundary: {0}")]
    Boundary(String),

    #[error("collinear design: {0}")]
    Collinearity(String),

    #[error("invalid covariance: {0}")]
    Covariance(String),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Convergence(#[from] OptimError),
}

impl Error {
    /// True for errors caused by the input data rather than by numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Load(_) | Error::EmptyCell(_) | Error::DegenerateClustering(_)
        )
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
