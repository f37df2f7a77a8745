use thiserror::Error;

/// Errors raised by the numerical core and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown divergence `{0}`")]
    UnknownDivergence(String),

    #[error("divergence `{0}` is excluded: f' is not invertible with 0 outside its domain")]
    ExcludedDivergence(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver failed after {iterations} iterations (last residual {residual:e}): {context}")]
    Solver {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("reward {value} outside [0, 1] at the true model")]
    RewardOutOfRange { value: f64 },

    #[error("confidence set is empty")]
    EmptyConfidenceSet,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_round(self, round: usize) -> Self {
        Error::AtRound {
            round,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
