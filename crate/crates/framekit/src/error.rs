use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("degenerate column {0}")]
    DegenerateColumn(usize),

    #[error("rank deficient, retraction undefined")]
    RankDeficient,

    #[error("coincident columns, radius zero: columns {0} and {1}")]
    CoincidentColumns(usize, usize),

    #[error("below Welch bound, impossible: gamma = {0}")]
    BelowWelchBound(f64),

    #[error("equivalence classes undefined for non-Fourier sources")]
    EquivalenceUndefined,

    #[error("infeasible selection: |K0| = {k0} exceeds n - m = {slack}")]
    InfeasibleSelection { k0: usize, slack: usize },

    #[error("unsupported Hadamard order {0}: built-in construction covers powers of two; supply a matrix file for other orders")]
    UnsupportedHadamardOrder(usize),

    #[error("invalid unital source: {0}")]
    InvalidSource(String),

    #[error("enumeration budget exceeded: {required} patterns required, cap is {cap}")]
    BudgetExceeded { required: u128, cap: u128 },

    #[error("malformed cone program: {0}")]
    MalformedProgram(String),

    #[error("solver failed on column {column}: {reason}")]
    ColumnSolve { column: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
