use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Array shapes disagree; `axis` names the offending dimension.
    #[error("dimension mismatch on {axis}: expected {expected}, found {found}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    /// The (within-demeaned) design does not have full column rank.
    #[error(
        "rank-deficient design: rank {rank} < {k} columns, condition number {condition:.3e}; \
         near-collinear columns: {}",
        columns.join(", ")
    )]
    RankDeficient {
        rank: usize,
        k: usize,
        condition: f64,
        columns: Vec<String>,
    },

    #[error("model '{model}' failed: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn in_model(self, model: &str) -> Self {
        Error::Model {
            model: model.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_model_if_needed(self, model: &str) -> Self {
        match self {
            Error::Model { .. } => self,
            other => other.in_model(model),
        }
    }

    /// Whether the failure is numerical (rank, conditioning) rather than a
    /// problem with the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. } | Error::Numerical(_) => true,
            Error::Model { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
