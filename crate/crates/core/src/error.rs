use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An index or argument is outside the domain of the object it addresses.
    #[error("invalid input: {0}")]
    Input(String),

    /// A combination of settings that cannot be executed (for example
    /// undiscounted sampling without a horizon bound).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A generated object failed its construction invariants.
    #[error("construction failed: {0}")]
    Construction(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("internal consistency violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
