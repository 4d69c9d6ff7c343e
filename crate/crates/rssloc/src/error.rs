use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a mathematical precondition (e.g. alpha <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value or combination is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// A text input (network, measurement or spec file) failed to parse.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A required input file is missing or unreadable.
    #[error("missing file: {0}")]
    MissingFile(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A run failed inside the engine; carries iteration/agent context.
    #[error("engine error (iteration {iteration}, node {node}): {msg}")]
    Engine {
        iteration: usize,
        node: u32,
        msg: String,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
