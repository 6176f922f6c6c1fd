use std::cell::Cell;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::asset::{IssuerKeys, StateUpdate, UsoAsset};
use super::operator::{EpochCommitment, EpochEvidence, EpochProof, OperatorId};
use crate::crypto::{self, PublicKey};
use crate::dlt::{LedgerNetwork, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Valid,
    BadGenesis,
    BrokenChain,
    BadEncumbrance,
    ProofMismatch,
    HistoryGap,
}

impl Verdict {
    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }

    pub fn code(self) -> &'static str {
        match self {
            Verdict::Valid => "VALID",
            Verdict::BadGenesis => "BAD_GENESIS",
            Verdict::BrokenChain => "BROKEN_CHAIN",
            Verdict::BadEncumbrance => "BAD_ENCUMBRANCE",
            Verdict::ProofMismatch => "PROOF_MISMATCH",
            Verdict::HistoryGap => "HISTORY_GAP",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Where a verifier gets the roots it trusts.
pub trait CommitmentSource {
    /// Whether `component` cites a commitment this source vouches for.
    fn certifies(&self, component: &EpochProof) -> bool;
    /// Most recent epoch this source knows for `operator`.
    fn latest_epoch(&self, operator: &OperatorId) -> Option<u64>;
}

/// Roots certified on the ledger. Counts entry reads.
pub struct DltSource<'a> {
    network: &'a LedgerNetwork,
    reads: Cell<usize>,
}

impl<'a> DltSource<'a> {
    pub fn new(network: &'a LedgerNetwork) -> Self {
        Self {
            network,
            reads: Cell::new(0),
        }
    }

    /// Ledger entries read so far.
    pub fn reads(&self) -> usize {
        self.reads.get()
    }
}

impl CommitmentSource for DltSource<'_> {
    fn certifies(&self, component: &EpochProof) -> bool {
        let Some(index) = component.ledger_index else {
            return false;
        };
        self.reads.set(self.reads.get() + 1);
        match self.network.entry(index) {
            Some(entry) => matches!(&entry.payload, Payload::Epoch(c) if *c == component.commitment),
            None => false,
        }
    }

    fn latest_epoch(&self, operator: &OperatorId) -> Option<u64> {
        self.network.latest_epoch(operator)
    }
}

/// Roots trusted on the operator's signature alone. The verifier learns the
/// latest epoch from the operator too, so it has nothing to compare against.
pub struct SelfAttestedSource {
    pub operator_key: PublicKey,
    pub latest_epoch: Option<u64>,
}

impl CommitmentSource for SelfAttestedSource {
    fn certifies(&self, component: &EpochProof) -> bool {
        component.commitment.verify_signature(&self.operator_key)
    }

    fn latest_epoch(&self, _operator: &OperatorId) -> Option<u64> {
        self.latest_epoch
    }
}

fn evidence_holds(asset: &UsoAsset, component: &EpochProof) -> bool {
    let EpochCommitment { root, size, .. } = &component.commitment;
    match &component.evidence {
        EpochEvidence::Inclusion(p) => p.leaf.asset_id == asset.asset_id && p.verify(*size, root),
        EpochEvidence::Absence(a) => a.verify(&asset.asset_id, *size, root),
    }
}

/// Checks an asset end to end and returns the first failure found.
pub fn verify_asset(asset: &UsoAsset, issuer: &IssuerKeys, source: &dyn CommitmentSource) -> Verdict {
    let genesis = &asset.genesis;
    if genesis.asset_id() != asset.asset_id || !issuer.verify_genesis(genesis) {
        return Verdict::BadGenesis;
    }

    let mut prev = asset.asset_id;
    for (i, u) in asset.updates.iter().enumerate() {
        if u.asset_id != asset.asset_id || u.counter != i as u64 + 1 || u.prev_digest != prev {
            return Verdict::BrokenChain;
        }
        prev = u.digest();
    }

    let mut owner = genesis.owner;
    for u in &asset.updates {
        let msg = StateUpdate::signing_bytes(&u.asset_id, u.counter, &u.prev_digest, &u.new_owner);
        if !crypto::verify(&owner, &msg, &u.signature) {
            return Verdict::BadEncumbrance;
        }
        owner = u.new_owner;
    }

    let proof = &asset.proof;
    if proof.asset_id != asset.asset_id || proof.operator_id != genesis.operator_id {
        return Verdict::ProofMismatch;
    }
    for component in &proof.components {
        let c = &component.commitment;
        if c.operator_id != proof.operator_id
            || c.epoch != component.epoch
            || !source.certifies(component)
            || !evidence_holds(asset, component)
        {
            return Verdict::ProofMismatch;
        }
    }

    let records: Vec<_> = proof
        .components
        .iter()
        .filter_map(|c| match &c.evidence {
            EpochEvidence::Inclusion(p) => Some(p.leaf.record),
            EpochEvidence::Absence(_) => None,
        })
        .collect();
    let expected = asset.record_digests();
    if records.iter().zip(&expected).any(|(a, b)| a != b) {
        return Verdict::ProofMismatch;
    }
    if records.len() != expected.len() {
        return Verdict::HistoryGap;
    }

    let epochs_dense = proof
        .components
        .iter()
        .map(|c| c.epoch)
        .eq(proof.from_epoch..=proof.to_epoch);
    let starts_at_genesis = matches!(
        proof.components.first().map(|c| &c.evidence),
        Some(EpochEvidence::Inclusion(p)) if p.leaf.record == asset.asset_id
    );
    let current = source.latest_epoch(&proof.operator_id) == Some(proof.to_epoch);
    if !(epochs_dense && starts_at_genesis && current) {
        return Verdict::HistoryGap;
    }
    Verdict::Valid
}
