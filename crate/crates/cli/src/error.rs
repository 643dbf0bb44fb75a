use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: magmaclust::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 1 usage, 2 data (including I/O), 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core { source, .. } if source.is_numerical_error() => 3,
            CliError::Core { .. } => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T>;
}

impl<T, E: Into<magmaclust::Error>> Context<T> for Result<T, E> {
    fn context(self, what: impl Into<String>) -> CliResult<T> {
        self.map_err(|e| CliError::Core { context: what.into(), source: e.into() })
    }
}
