use thiserror::Error;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input files: exit 2.
    #[error("{0}")]
    Schema(String),
    /// Arguments or dimensions that do not fit together: exit 3.
    #[error("{0}")]
    Incompatible(String),
    /// Cross-validation preconditions: exit 4.
    #[error("{0}")]
    CrossValidation(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) => 2,
            Self::Incompatible(_) => 3,
            Self::CrossValidation(_) => 4,
            Self::Io { .. } | Self::Other(_) => 1,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| Self::Io { context, source }
    }
}

impl From<setvalued::Error> for CliError {
    fn from(err: setvalued::Error) -> Self {
        use setvalued::Error as E;
        let message = err.to_string();
        match err {
            E::InvalidPartition(_) | E::EmptyCategory(_) | E::SingularScatter(_) => Self::Schema(message),
            E::CategoryTooSmall { .. } | E::NoFeasibleB { .. } => Self::CrossValidation(message),
            E::AllZeroMass => Self::Other(message),
            _ => Self::Incompatible(message),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        Self::Schema(format!("invalid JSON: {err}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
