use alloc::string::String;

/// Errors raised by the core algorithms.
///
/// Each variant corresponds to one failure class; the CLI maps them onto
/// diagnostics and exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("singular fit: {0}")]
    SingularFit(String),
}

pub type Result<T> = core::result::Result<T, Error>;
