use alloc::string::String;

/// Failures raised while building or using the operators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node set too sparse: {available} nodes, stencil needs {required}")]
    TooSparse { available: usize, required: usize },
    #[error("sampler produced no interior nodes")]
    NoNodes,
    #[error("node {index} lies outside the domain bounds")]
    NodeOutsideBounds { index: usize },
    #[error("quadrature recursion limit reached on box [{x0}, {x1}] x [{y0}, {y1}]")]
    QuadratureDepth { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("cell {cell}: degree-{degree} Vandermonde matrix is rank deficient")]
    RankDeficient { cell: usize, degree: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular linear system at pivot {0}")]
    Singular(usize),
    #[error("non-finite state at step {0}")]
    NonFinite(usize),
}

pub type Result<T> = core::result::Result<T, Error>;
