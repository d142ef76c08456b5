use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("insufficient samples: {0}")]
    Insufficient(String),

    #[error("class {class} exhausted: {available} unlabeled samples, {required} required")]
    ClassExhausted {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{phase} failed at acquisition {round}: {source}")]
    Phase {
        phase: &'static str,
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-parsable category used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonFinite(_) => "non-finite",
            Error::NotSymmetric(_) => "not-symmetric",
            Error::NoConvergence(_) => "no-convergence",
            Error::Insufficient(_) => "insufficient-samples",
            Error::ClassExhausted { .. } => "class-exhausted",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Phase { source, .. } => source.category(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn in_phase(self, phase: &'static str, round: usize) -> Error {
        Error::Phase {
            phase,
            round,
            source: Box::new(self),
        }
    }
}
