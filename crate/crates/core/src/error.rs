use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic bytes, not an SCF container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("payload exhausted at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("attempted to code a zero-frequency symbol")]
    ZeroFrequency,
    #[error("frequency total {0} outside the coder's range")]
    TotalOutOfRange(u32),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}
