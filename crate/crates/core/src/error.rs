use std::io;

/// Errors produced by the simulator and its estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input outside the domain of a geometric or numeric formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// Index outside its valid range.
    #[error("index out of range: {0}")]
    Index(String),
    /// Mismatched lengths or matrix shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Near-singular matrix inversion (e.g. zero-forcing on a degenerate effective channel).
    #[error("singular matrix: {0}")]
    Singular(String),
    /// Training produced a non-finite loss.
    #[error("divergence: {0}")]
    Divergence(String),
    /// Malformed input to an algorithm (duplicate candidates, empty dataset, ...).
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Corrupt or incompatible binary/text file.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Singular(_) | Error::Divergence(_) | Error::Domain(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
