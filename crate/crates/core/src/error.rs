//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has a negative weight at index {index}: {value}")]
    NegativeMass { index: usize, value: f64 },
    #[error("measure weights sum to {sum}, not 1 (tolerance 1e-12)")]
    NotNormalized { sum: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("requested sparsity {rho} exceeds the {cells} cells of the plan")]
    InfeasibleSparsity { rho: usize, cells: usize },
    #[error("instance size {size} exceeds the guard {guard}")]
    SizeGuardExceeded { size: usize, guard: usize },
    #[error("iteration produced a non-finite value: {context}")]
    NonFinite { context: String },
    #[error("scaling iteration did not converge: residual {residual} after {iterations} sweeps")]
    SinkhornNonConvergence {
        residual: f64,
        iterations: usize,
        best: Box<crate::entropic::SinkhornResult>,
    },
    #[error("kernel row or column sums underflowed to zero; eta is too small for plain scaling")]
    NumericalUnderflow,
    #[error("support pattern cannot carry the requested marginals")]
    InfeasibleSupport,
    #[error("negative entry {value} at ({row}, {col}) where a nonnegative matrix is required")]
    NegativeInput { row: usize, col: usize, value: f64 },
    #[error("block coordinate descent hit its iteration cap at stationarity {stationarity}")]
    IterationCapReached { stationarity: f64 },
    #[error("solver stopped without an epsilon-KKT certificate (feasibility {feasibility}, stationarity {stationarity})")]
    NotConverged {
        feasibility: f64,
        stationarity: f64,
        report: Box<crate::solver::SolveReport>,
    },
    #[error("matrix has no strictly positive entry")]
    AllZero,
    #[error("decomposition carries no nonnegative factor certificate")]
    NoCertificate,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
