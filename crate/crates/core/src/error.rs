use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("vec length {found} does not match expected {expected}")]
    VecLength { expected: usize, found: usize },
    #[error("eigensolver did not converge after {iterations} iterations (off-diagonal residual {off_diagonal:e})")]
    NoConvergence { iterations: usize, off_diagonal: f64 },
    #[error("eigenvector basis deficient: found {found} of {order} vectors")]
    EigenBasisDeficient { found: usize, order: usize },
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid case: {0}")]
    Semantic(String),
    #[error("unsupported case format `{0}`")]
    UnsupportedFormat(String),
    #[error("branch {index} ({from}-{to}) has zero series impedance")]
    ZeroImpedance { index: usize, from: usize, to: usize },
}

#[derive(Debug, Error)]
pub enum RelaxationError {
    #[error("bus index {index} out of range for a network of {n} buses")]
    BusOutOfRange { index: usize, n: usize },
    #[error("equality row {row} ({label}) is a combination of earlier rows but its right-hand side disagrees by {mismatch:e}")]
    InconsistentEquality {
        row: usize,
        label: String,
        mismatch: f64,
    },
    #[error("least-squares reduction failed: {0}")]
    Numerical(String),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("problem has matrix order 0")]
    EmptyProblem,
    #[error("constraint {index} has order {found}, expected {expected}")]
    ConstraintOrder {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("certificates require an optimal solution, got status {0}")]
    NotOptimal(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("unknown axis pair ({0}, {1})")]
    UnknownAxisPair(usize, usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
