use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated an operation's precondition.
    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },

    /// A normalization constant fell below the degenerate threshold.
    #[error("{op}: degenerate norm {norm:.3e}")]
    Degenerate { op: &'static str, norm: f64 },

    #[error("{op}: numeric failure: {msg}")]
    Numeric { op: &'static str, msg: String },

    /// Measured error exceeded the propagated bound.
    #[error("bound violated in {lemma}: actual {actual:.3e} > bound {bound:.3e}")]
    BoundViolation { lemma: String, actual: f64, bound: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract { op, msg: msg.into() }
    }

    pub(crate) fn numeric(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric { op, msg: msg.into() }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BoundViolation { .. } => 1,
            Error::Contract { .. } | Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Degenerate { .. } | Error::Numeric { .. } => 3,
        }
    }
}
