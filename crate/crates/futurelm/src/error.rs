use thiserror::Error;

/// Error type shared across the toolkit.
///
/// The CLI maps variants to exit codes: I/O and artifact-format problems
/// exit with 2, everything else (contract violations, bad configs,
/// numeric failures) with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("state error: {0}")]
    State(String),
    #[error("ingestion error: {0}")]
    Ingest(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("artifact format error: {0}")]
    Format(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Format(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
