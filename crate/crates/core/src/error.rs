use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: duplicate index {index}")]
    DuplicateIndex { line: usize, index: u32 },
    #[error("line {line}: duplicate message {message}")]
    DuplicateMessage { line: usize, message: String },
    #[error("line {line}: unknown message index {index}")]
    UnknownIndex { line: usize, index: u32 },
    #[error("line {line}: event has no messages")]
    EmptyEvent { line: usize },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FlowSpecError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("flow {flow}: branch {branch} starts with {found}, expected initial message {expected}")]
    InitialMismatch { flow: String, branch: usize, expected: String, found: String },
    #[error("flow {flow}: branch {branch}: {from} -> {to} violates structural causality")]
    NotCausal { flow: String, branch: usize, from: String, to: String },
    #[error("flow {flow}: {msg}")]
    Invalid { flow: String, msg: String },
    #[error("ground-truth model is nondeterministic: {0}")]
    Nondeterministic(String),
    #[error("invalid generator config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("message {0} is not a node of the causality graph")]
    UnknownMessage(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SliceError {
    #[error("attribute {attr} has non-integer value {value:?}, block mapping needs an address")]
    NonIntegerAddress { attr: String, value: String },
    #[error("negative address {0} cannot be block-mapped")]
    NegativeAddress(i64),
    #[error("bad slice policy {0:?}: {1}")]
    Policy(String, String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("edge {0} is not a variable of the problem")]
    UnknownEdge(String),
    #[error("brute-force space of {size} assignments exceeds the cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },
    #[error("assignment violates the problem: {0}")]
    NotASolution(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("constraint problem is infeasible")]
    Infeasible,
    #[error("no feasible window size up to {max_w}")]
    NoFeasibleWindow { max_w: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error("invalid extraction config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FsaError {
    #[error("nondeterministic transition from {state} on {msg}")]
    Nondeterministic { state: String, msg: String },
    #[error("transition refers to unknown state {0}")]
    DanglingState(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model JSON: {0}")]
    Json(String),
    #[error("cannot evaluate an empty trace")]
    EmptyTrace,
}

/// Umbrella error for the end-to-end pipeline and its front ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    FlowSpec(#[from] FlowSpecError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Fsa(#[from] FsaError),
    #[error("{0}")]
    Input(String),
}

impl Error {
    /// True when mining failed because no consistent model exists, as
    /// opposed to bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Extract(ExtractError::Infeasible | ExtractError::NoFeasibleWindow { .. }))
    }
}
