use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver error: {0}")]
    Solver(ultimax::Error),

    #[error("check failed: {0}")]
    Check(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ultimax::Error> for CliError {
    fn from(e: ultimax::Error) -> Self {
        match e {
            ultimax::Error::NonMonotoneSlice { .. } => CliError::Check(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl CliError {
    /// 2 for configuration, 3 for solver and i/o failures, 4 for a failed
    /// property check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}
