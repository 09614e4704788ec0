use thiserror::Error;

/// Errors produced by model fitting, imputation, and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing responses present where complete data is required ({0} missing)")]
    MissingResponses(usize),
    #[error("no observed responses at time {time}")]
    NoObservedResponses { time: usize },
    #[error("rank-deficient {part} design: offending columns {columns:?}")]
    RankDeficientDesign { part: &'static str, columns: Vec<usize> },
    #[error("information matrix singular even after ridge retry")]
    SingularInformation,
    #[error("degenerate design at time {time}: {reason}")]
    DegenerateDesign { time: usize, reason: String },
    #[error("error at time {time}: {source}")]
    AtTime {
        time: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_time(self, time: usize) -> Error {
        Error::AtTime {
            time,
            source: Box::new(self),
        }
    }
}
