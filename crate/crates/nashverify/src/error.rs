use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// Variants split into two families mirrored by the CLI exit codes:
/// usage/configuration problems (exit 2) and runtime data or backend
/// failures (exit 1). See [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("fixed-point iteration did not converge within {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("no numeric score token in judge output: {text:?}")]
    ScoreParse { text: String },

    #[error("unresolved placeholder {{{placeholder}}} in prompt template")]
    Template { placeholder: String },

    #[error("backend failure: {message}")]
    Backend {
        message: String,
        /// HTTP status of the last failed attempt, when one was received.
        status: Option<u16>,
    },

    #[error("fixture shape: {0}")]
    FixtureShape(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for usage/config failures,
    /// 1 for partial-data or backend failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::NonFinite { .. }
            | Error::InvalidArgument(_)
            | Error::LengthMismatch { .. }
            | Error::Template { .. }
            | Error::Config(_) => 2,
            Error::NonConvergence { .. }
            | Error::ScoreParse { .. }
            | Error::Backend { .. }
            | Error::FixtureShape(_)
            | Error::Io { .. } => 1,
        }
    }
}
