use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("non-finite value in input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("text of length {len} is shorter than n-gram order {order}")]
    LengthTooShort { len: usize, order: usize },

    #[error("lengths must be positive (candidate {cand}, reference {reference})")]
    ZeroLength { cand: usize, reference: usize },

    #[error("empty text")]
    EmptyText,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("position {position} out of range for order {order} over {len} positions")]
    PositionOutOfRange {
        position: usize,
        order: usize,
        len: usize,
    },

    #[error("exhaustive enumeration needs {outcomes} outcomes, cap is {cap}")]
    InstanceTooLarge { outcomes: u128, cap: u64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
