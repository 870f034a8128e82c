use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node id must be non-empty")]
    EmptyId,
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` has no alternative `{alternative}`")]
    UnknownAlternative { node: String, alternative: String },
    #[error("cycle detected through node `{0}`")]
    CycleDetected(String),
    #[error("multiple roots: {}", .0.join(", "))]
    MultipleRoots(Vec<String>),
    #[error("dimension mismatch at node `{node}`: {detail}")]
    DimensionMismatch { node: String, detail: String },
    #[error("bad distribution at node `{node}`: {detail}")]
    BadDistribution { node: String, detail: String },
    #[error("inconsistent evidence: {0}")]
    InconsistentEvidence(String),
    #[error("negative variance {value:e} at node `{node}`")]
    NegativeVariance { node: String, value: f64 },
    #[error("enumeration size {size} exceeds cap {cap}")]
    CapExceeded { size: u128, cap: u128 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InconsistentEvidence(_) => 3,
            Error::PreconditionViolated(_) | Error::CapExceeded { .. } | Error::DomainError(_) => 5,
            _ => 2,
        }
    }
}
