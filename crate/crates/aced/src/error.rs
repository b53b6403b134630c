use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcedError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {index} out of range for size {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("degenerate objective: {0}")]
    DegenerateObjective(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("label source failed: {0}")]
    LabelSource(String),
}

pub type Result<T> = std::result::Result<T, AcedError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(AcedError::LengthMismatch { expected, got })
    }
}

pub(crate) fn check_index(index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(AcedError::IndexOutOfRange { index, len })
    }
}
