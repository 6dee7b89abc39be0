use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric failure in {routine}: {detail}")]
    NumericFailure { routine: &'static str, detail: String },

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("rank {requested} is too small for a state with {actual} nonzero eigenvalues")]
    RankDeficit { requested: usize, actual: usize },

    #[error("all intensities vanish for this state")]
    DegenerateState,

    #[error("protocol is incomplete: q = {q}, need {needed}")]
    IncompleteProtocol { q: usize, needed: usize },

    #[error("row {row} has zero intensity at the true state; Fisher information is singular")]
    BoundaryState { row: usize },

    #[error("moment undefined: {0}")]
    UndefinedMoment(&'static str),

    #[error("adequacy test not possible: {dof} degrees of freedom")]
    NotTestable { dof: i64 },

    #[error("largest singular value is degenerate ({first:.6e} vs {second:.6e})")]
    AmbiguousNormalization { first: f64, second: f64 },

    #[error("tensor power of {rows}x{cols} exceeds the cap of {cap} entries")]
    MemoryCap { rows: usize, cols: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
