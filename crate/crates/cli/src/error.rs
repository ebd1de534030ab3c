use ordinal_did::Error;
use thiserror::Error;

/// Failure of a command, carrying its process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config files or output paths. Exit 2.
    #[error("config error: {0}")]
    Config(String),
    /// Input data unusable. Exit 3.
    #[error("data error: {0}")]
    Data(String),
    /// Estimation failed numerically. Exit 4.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::Domain(_) => CliError::Config(msg),
            Error::Load(_) | Error::EmptyCell(_) | Error::DegenerateClustering(_) => {
                CliError::Data(msg)
            }
            Error::Collinearity(_) => CliError::Data(msg),
            Error::NonIdentified(_)
            | Error::Boundary(_)
            | Error::Covariance(_)
            | Error::Convergence(_) => CliError::Numeric(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
