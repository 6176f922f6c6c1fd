//! Oblivious tracking: assets carry their own signed history, and an
//! operator that only ever sees `(asset_id, record digest)` pairs commits to
//! each epoch's pairs with a Merkle root.
//!
//! A holder proves provenance with one component per epoch since issuance:
//! an inclusion proof where the asset changed, an absence proof everywhere
//! else. With [`Mitigation::Dlt`] each root is checked against the ledger,
//! which holds at most one root per `(operator, epoch)`.

mod asset;
pub mod merkle;
mod operator;
mod verify;

pub use asset::{
    issue_asset, transfer, Genesis, IssuerKeys, IssuerSignature, StateUpdate, UsoAsset, UsoIssuer,
};
pub use merkle::{AbsenceProof, EpochTree, Leaf, LeafProof};
pub use operator::{
    publish_commitment, EpochCommitment, EpochEvidence, EpochProof, Equivocation, Mitigation,
    Operator, OperatorId, ProofOfProvenance, SubmissionReceipt,
};
pub use verify::{verify_asset, CommitmentSource, DltSource, SelfAttestedSource, Verdict};
