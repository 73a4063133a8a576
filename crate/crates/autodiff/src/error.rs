use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
    #[error("backward seed must be a scalar, got shape {0:?}")]
    NonScalarSeed(Vec<usize>),
    #[error("{op}: invalid argument: {reason}")]
    Invalid { op: &'static str, reason: String },
    #[error("numeric trap in {op} (node {node}): {reason}")]
    Trap {
        op: &'static str,
        node: usize,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
