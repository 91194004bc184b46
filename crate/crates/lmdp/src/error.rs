//! Error taxonomy shared across the crate.
//!
//! Every fallible operation returns [`enum@Error`]. Variants are grouped by
//! how a caller should react: input validation (`Stochasticity`, `Weight`,
//! `RewardBound`, `Dimension`, `Domain`, `Format`), resource caps
//! (`CapExceeded`, `EnumerationCapExceeded`), probability-zero conditioning
//! (`ZeroProbabilityEvent`), and internal contract violations
//! (`PolicyDomain`, `Infeasible`) that indicate a bug in the caller rather
//! than bad data.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A transition or initial-state row is not a probability distribution.
    #[error("stochasticity violation at {context}: {detail}")]
    Stochasticity { context: String, detail: String },

    /// Mixture weights are not a strictly positive distribution.
    #[error("mixture weight violation: {0}")]
    Weight(String),

    /// A reward entry is outside [0, 1], or some supported length-H path
    /// accumulates total reward above 1.
    #[error("reward bound violation: {0}")]
    RewardBound(String),

    /// Tables or vectors disagree on declared dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// History-tree construction exceeded the node cap.
    #[error("history tree exceeds cap of {cap} nodes (at depth {depth})")]
    CapExceeded { cap: usize, depth: usize },

    /// A policy enumeration would exceed the configured cap.
    #[error("policy enumeration of {needed} candidates exceeds cap of {cap}")]
    EnumerationCapExceeded { needed: u128, cap: u64 },

    /// A belief update conditioned on an observation of probability zero.
    #[error("belief update conditioned on a zero-probability event: {0}")]
    ZeroProbabilityEvent(String),

    /// A scalar parameter is outside its domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// A policy was asked for an action on a history outside its domain.
    /// Possible only for tree policies evaluated off their tree; treated as
    /// a bug signal, not a recoverable condition.
    #[error("policy undefined on realized history: {0}")]
    PolicyDomain(String),

    /// The box-constrained simplex region is empty.
    #[error("box-simplex program infeasible: {0}")]
    Infeasible(String),

    /// Model file schema violation (missing field, malformed JSON, ...).
    #[error("model file format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl Error {
    /// Process exit code for the command-line front end.
    /// 2 = validation, 3 = cap exceeded, 4 = io.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CapExceeded { .. } | Error::EnumerationCapExceeded { .. } => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }
}
