use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnmError {
    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("function undefined at x = {0}")]
    FunctionUndefined(i64),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("value {value} outside domain {domain}")]
    ValueOutOfDomain { value: i64, domain: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    #[error("arithmetic overflow in exact computation")]
    Overflow,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = AnmError> = std::result::Result<T, E>;
