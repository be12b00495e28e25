use thiserror::Error;

/// Errors raised by the lattice, propagation, learning and geometry routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("lattice dimension is zero (h={height}, w={width}, d={factor})")]
    ZeroDimension {
        height: usize,
        width: usize,
        factor: usize,
    },
    #[error("factor {factor} does not divide image size {height}x{width}")]
    NonDivisible {
        height: usize,
        width: usize,
        factor: usize,
    },
    #[error("node {node} out of range for lattice with {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("logit at node {node}, slot {slot} is not finite")]
    NonFiniteLogit { node: usize, slot: usize },
    #[error("state or field does not belong to this lattice: {0}")]
    LatticeMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weights at node {node}: {reason}")]
    InvalidWeights { node: usize, reason: String },
    #[error("center node {center} is not a foreground node")]
    CenterNotForeground { center: usize },
    #[error("box {index} extends outside the image")]
    BoxOutOfBounds { index: usize },
    #[error("box {index} covers no lattice node")]
    EmptyBox { index: usize },
    #[error("loss became non-finite at iteration {iteration}")]
    DivergedLoss {
        iteration: usize,
        /// Total loss of every completed iteration up to the failure.
        trace: Vec<f64>,
    },
    #[error("greedy path from node {node} revisits node {revisited} without reaching a fixed point")]
    CycleDetected { node: usize, revisited: usize },
    #[error("column {column} was pruned to zero (threshold too aggressive)")]
    AllPruned { column: usize },
    #[error("degenerate box geometry: w={w}, h={h}")]
    DegenerateBox { w: f64, h: f64 },
    #[error("cluster centered at {center} has no usable members")]
    EmptyCluster { center: usize },
    #[error("could not place box {index} after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable variant name, used for structured error reporting.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ZeroDimension { .. } => "ZeroDimension",
            Error::NonDivisible { .. } => "NonDivisible",
            Error::NodeOutOfRange { .. } => "NodeOutOfRange",
            Error::NonFiniteLogit { .. } => "NonFiniteLogit",
            Error::LatticeMismatch(_) => "LatticeMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidWeights { .. } => "InvalidWeights",
            Error::CenterNotForeground { .. } => "CenterNotForeground",
            Error::BoxOutOfBounds { .. } => "BoxOutOfBounds",
            Error::EmptyBox { .. } => "EmptyBox",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::CycleDetected { .. } => "CycleDetected",
            Error::AllPruned { .. } => "AllPruned",
            Error::DegenerateBox { .. } => "DegenerateBox",
            Error::EmptyCluster { .. } => "EmptyCluster",
            Error::PlacementFailed { .. } => "PlacementFailed",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
