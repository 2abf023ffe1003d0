use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite weight in layer {layer} at ({row}, {col})")]
    NonFiniteWeight { layer: usize, row: usize, col: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("graph is disconnected (lambda2 = {lambda2:e})")]
    DisconnectedSpectrum { lambda2: f64 },

    #[error("brute-force enumeration capped at {cap} vertices, graph has {n}")]
    VertexCapExceeded { n: usize, cap: usize },

    #[error("no valid test vector: vector vanishes after projection against the constant vector")]
    DegenerateTestVector,

    #[error("eigensolver did not converge after {iterations} restarts (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("training diverged at epoch {epoch}, iteration {iteration}")]
    Diverged { epoch: usize, iteration: usize },

    #[error("eigensolver failed at iteration {iteration}: {source}")]
    Refresh {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
