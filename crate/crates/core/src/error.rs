use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("alphabet mismatch: expected {expected}, found {found}")]
    AlphabetMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symbol {symbol} outside alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("detector already stopped at index {0}")]
    AlreadyStopped(usize),

    #[error("codebook of {requested} symbols exceeds cap of {cap}")]
    CapExceeded { requested: usize, cap: usize },

    #[error("every candidate input symbol has infinite sensing cost")]
    AllCostsInfinite,

    #[error("region check failed: {0}")]
    RegionInvariant(String),

    #[error("log-likelihood ratio is unbounded for this model")]
    UnboundedLlr,

    #[error("all {runs} runs were censored")]
    AllCensored { runs: usize },

    #[error("codebook format error at line {line}: {message}")]
    Format { line: usize, message: String },
}
