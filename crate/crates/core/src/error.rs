use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("all {what} eliminated by {threshold} = {value}")]
    FilteredOut {
        what: &'static str,
        threshold: &'static str,
        value: usize,
    },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("events not sorted by timestamp at position {0}")]
    Unsorted(usize),
    #[error("no co-occurring item pairs observed (D = 0)")]
    NoCooccurrence,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular normal equations for {block} row {row}")]
    Singular { block: &'static str, row: usize },
    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("empty ground truth")]
    EmptyTruth,
    #[error("no evaluable users")]
    NoEvaluableUsers,
}

pub type Result<T> = core::result::Result<T, Error>;
