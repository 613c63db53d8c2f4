use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EwmError {
    #[error("distribution needs at least 2 outcomes, got {0}")]
    TooShort(usize),
    #[error("weight {index} is negative or not finite ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, not 1")]
    SumNotOne(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("delta must lie in (0, 2), got {0}")]
    BadDelta(f64),
    #[error("invalid neighborhood: {0}")]
    InvalidSpec(String),
    #[error("target lies outside the neighborhood: l1 distance {distance} > delta {delta}")]
    OutsideNeighborhood { distance: f64, delta: f64 },
    #[error("invalid extreme pair ({gain}, {loss}) for vocabulary of size {n}")]
    InvalidPair { gain: usize, loss: usize, n: usize },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid mixture weights: {0}")]
    BadWeights(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid e-value table: {0}")]
    InvalidTable(String),
    #[error("row {0} has zero mass")]
    ZeroRow(usize),
    #[error("kernel row {row} sums to {sum}, not 1")]
    NotRowStochastic { row: usize, sum: f64 },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("detector already stopped at step {0}")]
    AlreadyStopped(u64),
    #[error("index ({v}, {s}) out of range for vocabulary of size {n}")]
    IndexOutOfRange { v: usize, s: usize, n: usize },
    #[error("empty stream")]
    EmptyStream,
    #[error("problem too large for exhaustive enumeration: n = {n} > {max}")]
    TooLarge { n: usize, max: usize },
    #[error("bad parameters: {0}")]
    BadParams(String),
}

pub type Result<T> = std::result::Result<T, EwmError>;
