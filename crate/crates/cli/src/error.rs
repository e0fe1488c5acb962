use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Domain(#[from] aquaplan::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
}

impl CliError {
    /// 1 for domain failures, 2 for anything wrong with the invocation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Domain(_) | Self::Io { .. } => 1,
            Self::Usage(_) | Self::Config { .. } | Self::Manifest(_) => 2,
        }
    }
}

impl From<aquaplan::optimizer::OptimizeError> for CliError {
    fn from(e: aquaplan::optimizer::OptimizeError) -> Self {
        Self::Domain(e.source)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
