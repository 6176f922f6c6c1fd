use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a ledger, issuer or operator refused an operation.
///
/// Every variant carries a stable code (`REJECTED_*`) that appears in logs
/// and reports.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    #[error("REJECTED_NO_QUORUM: {signatures} of {required} required signatures")]
    NoQuorum { signatures: usize, required: usize },
    #[error("REJECTED_INVALID: {0}")]
    Invalid(String),
    #[error("REJECTED_UNKNOWN_PARTY: {0}")]
    UnknownParty(String),
    #[error("REJECTED_INSUFFICIENT_FUNDS: {account} holds {balance}, needs {amount}")]
    InsufficientFunds {
        account: String,
        balance: u64,
        amount: u64,
    },
    #[error("REJECTED_UNAUTHORISED_ISSUE")]
    UnauthorisedIssue,
    #[error("REJECTED_DOUBLE_SPEND: {0}")]
    DoubleSpend(String),
    #[error("REJECTED_UNKNOWN_TOKEN: {0}")]
    UnknownToken(String),
    #[error("REJECTED_VALUE_MISMATCH: inputs {inputs}, outputs {outputs}")]
    ValueMismatch { inputs: u64, outputs: u64 },
    #[error("REJECTED_BAD_SIGNATURE")]
    BadSignature,
    #[error("REJECTED_BAD_DENOMINATION: {0}")]
    BadDenomination(u64),
    #[error("NOT_TRACEABLE")]
    NotTraceable,
    #[error("REJECTED_DUPLICATE_IN_EPOCH: asset already has a leaf in epoch {epoch}")]
    DuplicateInEpoch { epoch: u64 },
    #[error("REJECTED_EPOCH_OPEN: epoch {epoch} is still open")]
    EpochOpen { epoch: u64 },
    #[error("REJECTED_DUPLICATE_EPOCH: operator {operator} already committed epoch {epoch}")]
    DuplicateEpoch { operator: String, epoch: u64 },
}

impl Rejection {
    /// Every code [`Rejection::code`] can return.
    pub const CODES: [&'static str; 14] = [
        "REJECTED_NO_QUORUM",
        "REJECTED_INVALID",
        "REJECTED_UNKNOWN_PARTY",
        "REJECTED_INSUFFICIENT_FUNDS",
        "REJECTED_UNAUTHORISED_ISSUE",
        "REJECTED_DOUBLE_SPEND",
        "REJECTED_UNKNOWN_TOKEN",
        "REJECTED_VALUE_MISMATCH",
        "REJECTED_BAD_SIGNATURE",
        "REJECTED_BAD_DENOMINATION",
        "NOT_TRACEABLE",
        "REJECTED_DUPLICATE_IN_EPOCH",
        "REJECTED_EPOCH_OPEN",
        "REJECTED_DUPLICATE_EPOCH",
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Rejection::NoQuorum { .. } => "REJECTED_NO_QUORUM",
            Rejection::Invalid(_) => "REJECTED_INVALID",
            Rejection::UnknownParty(_) => "REJECTED_UNKNOWN_PARTY",
            Rejection::InsufficientFunds { .. } => "REJECTED_INSUFFICIENT_FUNDS",
            Rejection::UnauthorisedIssue => "REJECTED_UNAUTHORISED_ISSUE",
            Rejection::DoubleSpend(_) => "REJECTED_DOUBLE_SPEND",
            Rejection::UnknownToken(_) => "REJECTED_UNKNOWN_TOKEN",
            Rejection::ValueMismatch { .. } => "REJECTED_VALUE_MISMATCH",
            Rejection::BadSignature => "REJECTED_BAD_SIGNATURE",
            Rejection::BadDenomination(_) => "REJECTED_BAD_DENOMINATION",
            Rejection::NotTraceable => "NOT_TRACEABLE",
            Rejection::DuplicateInEpoch { .. } => "REJECTED_DUPLICATE_IN_EPOCH",
            Rejection::EpochOpen { .. } => "REJECTED_EPOCH_OPEN",
            Rejection::DuplicateEpoch { .. } => "REJECTED_DUPLICATE_EPOCH",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Rejection::Invalid(msg.into())
    }
}

pub type Result<T, E = Rejection> = std::result::Result<T, E>;
