use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the in-memory codec.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("shape mismatch: expected {expected} elements, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("empty input")]
    Empty,
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("invalid segment layout: {0}")]
    Segments(&'static str),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("symbol {0} has no code in the table")]
    UnknownSymbol(u16),
    #[error("corrupt data: {0}")]
    Corrupt(&'static str),
}
