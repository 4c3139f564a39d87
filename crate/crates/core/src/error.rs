use thiserror::Error;

/// Errors raised by model construction, learning and data handling.
#[derive(Debug, Error)]
pub enum XspnError {
    /// Caller supplied malformed or inconsistent input.
    #[error("input error: {0}")]
    Input(String),
    /// A data file could not be parsed.
    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },
    /// A model file does not match the expected schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    /// The request exceeds a hard resource limit.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// The network is structurally unusable for the requested operation.
    #[error("structure error: {0}")]
    Structure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, XspnError>;

impl XspnError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        XspnError::Input(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        XspnError::Capacity(msg.into())
    }

    pub(crate) fn schema(path: impl Into<String>, msg: impl Into<String>) -> Self {
        XspnError::Schema {
            path: path.into(),
            message: msg.into(),
        }
    }
}
