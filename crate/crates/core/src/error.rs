use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum ApxError {
    #[error("unknown element id {0}")]
    UnknownElement(u32),
    #[error("refinement rule mismatch: partition uses {expected:?}, request uses {got:?}")]
    RuleMismatch {
        expected: crate::mesh::Rule,
        got: crate::mesh::Rule,
    },
    #[error("partitions do not share the same refinement forest")]
    MismatchedRoots,
    #[error("operation requires a conforming partition")]
    NonConforming,
    #[error("malformed mesh file at line {line}: {msg}")]
    MalformedMesh { line: usize, msg: String },
    #[error("unsupported mesh file version: {0}")]
    MeshVersion(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("field `{0}` has no gradient evaluator")]
    MissingGradient(String),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("system is not positive definite (curvature {0:e})")]
    Indefinite(f64),
    #[error("singular local system: {0}")]
    SingularLocal(String),
    #[error("iteration cap of {cap} reached")]
    IterationCap {
        cap: usize,
        /// Number of marked elements in each completed round.
        marked: Vec<usize>,
        /// Element counts after each completed round.
        sizes: Vec<usize>,
    },
    #[error("exact solution required but the problem does not provide one")]
    MissingExactSolution,
    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),
    #[error("empty integration region")]
    EmptyRegion,
}

pub type Result<T> = std::result::Result<T, ApxError>;
