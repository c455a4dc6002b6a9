use std::path::PathBuf;

/// Errors surfaced by the command-line driver. Each maps to a process exit
/// code.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed IDX file: {message}")]
    Format { path: PathBuf, message: String },
    #[error("IDX files disagree: {0}")]
    Consistency(String),
    #[error(transparent)]
    Core(#[from] psgd_core::Error),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }

    /// 2 for configuration problems, 3 for numerical divergence, 4 for IO and
    /// file-format problems.
    pub fn exit_code(&self) -> i32 {
        use psgd_core::Error as E;
        match self {
            SimError::Config(_) => 2,
            SimError::Io { .. } | SimError::Format { .. } | SimError::Consistency(_) => 4,
            SimError::Core(E::Divergence { .. } | E::Numerical { .. }) => 3,
            SimError::Core(_) => 2,
        }
    }
}
