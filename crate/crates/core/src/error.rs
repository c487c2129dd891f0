use thiserror::Error;

/// Errors raised by the annealing engine, the oracles and the chain tools.
#[derive(Debug, Error)]
pub enum SqaError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("chain is not reversible (max violation {violation:e})")]
    NotReversible { violation: f64 },

    #[error("invalid path from {from} to {to}: {reason}")]
    InvalidPath { from: usize, to: usize, reason: String },

    #[error("construction infeasible: {0}")]
    Infeasible(String),

    #[error("every replica aborted ({aborted} of {replicas})")]
    AllReplicasAborted { aborted: usize, replicas: usize },

    #[error("malformed input: {0}")]
    Malformed(String),
}

impl SqaError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        SqaError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SqaError>;
