use thiserror::Error;

/// Every failure the simulator can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bit stream of length {len} is not a multiple of {bits_per_symbol} bits per symbol")]
    Framing { len: usize, bits_per_symbol: usize },

    #[error("codebook of {size} candidates exceeds the cap of {cap}")]
    Capacity { size: u128, cap: usize },

    #[error("code matrix power {power} exceeds the budget {budget}")]
    PowerConstraint { power: f64, budget: f64 },

    #[error("all adjustable code matrices are zero")]
    Degenerate,

    #[error("out of range: {0}")]
    Range(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
