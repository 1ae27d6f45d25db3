use thiserror::Error;

pub type Result<T> = std::result::Result<T, RvlError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RvlError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (entry ({row},{col}) differs by {gap:e})")]
    Asymmetric { row: usize, col: usize, gap: f64 },

    #[error("linear system is singular to tolerance")]
    SingularSystem,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing context for rate schedule: {0}")]
    MissingContext(&'static str),

    #[error("initial estimate lies outside the constraint set")]
    InitialEstimateOutside,

    #[error("stream is causal: requested t={requested} after t={last}")]
    CausalityViolation { last: u64, requested: u64 },

    #[error("window of length {window} does not fit a sequence of length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations")]
    UnstabilizableEstimate { iterations: usize },

    #[error("ledger record out of order: expected t={expected}, found t={found}")]
    LedgerOrder { expected: u64, found: u64 },

    #[error("ledger record at t={t} does not re-evaluate to its stored loss (gap {gap:e})")]
    LedgerMismatch { t: u64, gap: f64 },

    #[error("empty trace")]
    EmptyTrace,
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(RvlError::DimensionMismatch { expected, found })
    }
}
