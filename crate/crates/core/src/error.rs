use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mask is not binary (value {value} at index {index})")]
    NonBinaryMask { value: f64, index: usize },
    #[error("iteration {i} outside 1..={n}")]
    IterationOutOfRange { i: usize, n: usize },
    #[error("slot index {slot} out of range for {rows} style slots")]
    SlotOutOfRange { slot: usize, rows: usize },
    #[error("degenerate edit direction: positive and negative means coincide")]
    DegenerateDirection,
    #[error("non-finite loss {value} in batch {batch}")]
    NonFiniteLoss { value: f64, batch: String },
    #[error("unknown style range {0:?}")]
    UnknownRange(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: impl core::fmt::Debug, got: impl core::fmt::Debug) -> Error {
    Error::Dimension {
        context,
        expected: alloc::format!("{expected:?}"),
        got: alloc::format!("{got:?}"),
    }
}
