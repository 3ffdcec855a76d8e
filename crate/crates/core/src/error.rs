use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure while reading the detector-error-model text format.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: probability {value} is outside (0, 1)")]
    Probability { line: usize, value: f64 },
    #[error("line {line}: `{construct}` blocks are not supported; flatten the model first")]
    Unsupported { line: usize, construct: String },
    #[error("line {line}: decomposition component has {count} detectors (at most 2 allowed)")]
    Decomposition { line: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Dem(#[from] DemError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid code spec: {0}")]
    InvalidSpec(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("model has no detector basis annotation; supply a sidecar or run basis inference")]
    MissingBasis,
    #[error("mechanism {mechanism}: {reason}")]
    Projection { mechanism: usize, reason: String },
    #[error("syndrome cannot be matched: a component with odd defect parity has no path to the boundary")]
    InfeasibleSyndrome,
    #[error("edge {edge} has negative weight {weight}")]
    NegativeWeight { edge: usize, weight: f64 },
    #[error("chosen edge {edge} in the {basis} graph has no consistent mechanism explanation")]
    InfeasibleRecovery { basis: char, edge: usize },
    #[error("exact enumeration refused: {mechanisms} mechanisms exceeds the limit of {limit}")]
    TooManyMechanisms { mechanisms: usize, limit: usize },
    #[error("bond dimension must be at least 1")]
    InvalidBondDimension,
    #[error("tensor contraction lost numerical range: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
