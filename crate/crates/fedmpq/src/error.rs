//! Error type shared across the crate.

/// Errors produced by codec, aggregation, and simulation operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty vector")]
    EmptyVector,

    #[error("empty codebook list")]
    EmptyCodebookList,

    #[error("corrupt code: {0}")]
    CorruptCode(String),

    #[error("corrupt packet: {0}")]
    CorruptPacket(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("duplicate client {0} in this round")]
    DuplicateClient(u64),

    #[error("empty aggregation")]
    EmptyAggregation,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
