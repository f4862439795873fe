use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("matrix is not permutation-like: argmax of columns {0} and {1} collide")]
    NotPermutationLike(usize, usize),
    #[error("matrix is all zero; cannot scale")]
    AllZeroMatrix,
    #[error("best-known objective must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("entry ({row}, {col}) plus eps is negative: {value}")]
    NegativeBase { row: usize, col: usize, value: f64 },
    #[error("gradient of the Lp term is singular at a zero entry with eps = 0")]
    GradientSingular,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} did not converge within {iters} iterations")]
    IterationLimit { what: &'static str, iters: usize },
    #[error("projection onto the cut-restricted polytope looks infeasible")]
    EmptyIntersectionSuspected,
    #[error("expected {expected} numeric tokens, found {got} (byte {offset})")]
    TokenCount { expected: usize, got: usize, offset: usize },
    #[error("non-numeric token {token:?} at byte {offset}")]
    NonNumeric { token: String, offset: usize },
    #[error("bad header on line {line}: {msg}")]
    BadHeader { line: usize, msg: String },
    #[error("index {index} out of range 1..={n} on line {line}")]
    IndexOutOfRange { line: usize, index: usize, n: usize },
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
