use std::path::{Path, PathBuf};

/// Failures of a run, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A condition could not be certified or no rate formula applies. The
    /// failing certificate, if any, has been written to `artifact`.
    #[error("{message}")]
    Infeasible { message: String, artifact: Option<PathBuf> },
    #[error("numerical failure in {context}: {source}")]
    Numeric { context: &'static str, source: hypokit::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible { .. } => 3,
            CliError::Numeric { .. } => 4,
        }
    }
}

/// Attaches a context label to toolkit errors. Malformed inputs are reported
/// as configuration errors; everything else is numerical.
pub(crate) trait Context<T> {
    fn context(self, what: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for hypokit::Result<T> {
    fn context(self, what: &'static str) -> Result<T, CliError> {
        self.map_err(|e| match e {
            hypokit::Error::InvalidInput(msg) => CliError::Config(format!("{what}: {msg}")),
            e @ hypokit::Error::UncoveredRegion { .. } => CliError::Infeasible { message: e.to_string(), artifact: None },
            source => CliError::Numeric { context: what, source },
        })
    }
}
