use std::collections::BTreeMap;
use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::merkle::{AbsenceProof, EpochTree, Leaf, LeafProof};
use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature};
use crate::dlt::{EntryKind, LedgerEntry, LedgerNetwork, Payload};
use crate::encoding::{Canonical, Encoder};
use crate::error::{Rejection, Result};
use crate::transcript::{HexBytes, ObservedSpend, ObserverTranscript, SystemLabel};
use crate::Privacy;

const COMMITMENT_DOMAIN: &str = "tokenlab/epoch-commitment/v1";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatorId(String);

impl OperatorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Where an operator's epoch roots are anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mitigation {
    /// Roots are certified on the distributed ledger, one per epoch.
    Dlt,
    /// Roots are only signed by the operator.
    SelfAttested,
}

/// Operator-signed root of one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochCommitment {
    pub operator_id: OperatorId,
    pub epoch: u64,
    pub root: Digest,
    pub size: u64,
    pub operator_signature: Signature,
}

impl EpochCommitment {
    fn signing_bytes(operator_id: &OperatorId, epoch: u64, root: &Digest, size: u64) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.str(COMMITMENT_DOMAIN)
            .str(operator_id.as_str())
            .u64(epoch)
            .item(root)
            .u64(size);
        enc.finish()
    }

    pub fn signed(operator: &KeyPair, operator_id: OperatorId, epoch: u64, tree: &EpochTree) -> Self {
        let root = tree.root();
        let size = tree.size();
        let operator_signature =
            operator.sign(&Self::signing_bytes(&operator_id, epoch, &root, size));
        Self {
            operator_id,
            epoch,
            root,
            size,
            operator_signature,
        }
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        crypto::verify(
            key,
            &Self::signing_bytes(&self.operator_id, self.epoch, &self.root, self.size),
            &self.operator_signature,
        )
    }
}

impl Canonical for EpochCommitment {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self.operator_id.as_str())
            .u64(self.epoch)
            .item(&self.root)
            .u64(self.size)
            .item(&self.operator_signature);
    }
}

/// Acknowledgement of one submitted leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionReceipt {
    pub asset_id: Digest,
    pub record: Digest,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EpochEvidence {
    Inclusion(LeafProof),
    Absence(AbsenceProof),
}

/// Evidence about one epoch, tied to the commitment it was checked against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochProof {
    pub epoch: u64,
    pub commitment: EpochCommitment,
    /// Ledger index of the certified commitment; `None` when self-attested.
    pub ledger_index: Option<u64>,
    pub evidence: EpochEvidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofOfProvenance {
    pub asset_id: Digest,
    pub operator_id: OperatorId,
    pub from_epoch: u64,
    pub to_epoch: u64,
    pub components: Vec<EpochProof>,
}

impl ProofOfProvenance {
    pub fn empty(asset_id: Digest, operator_id: OperatorId, from_epoch: u64) -> Self {
        Self {
            asset_id,
            operator_id,
            from_epoch,
            to_epoch: from_epoch,
            components: Vec::new(),
        }
    }

    pub fn inclusions(&self) -> usize {
        self.components
            .iter()
            .filter(|c| matches!(c.evidence, EpochEvidence::Inclusion(_)))
            .count()
    }

    pub fn absences(&self) -> usize {
        self.components.len() - self.inclusions()
    }
}

/// An alternate, operator-signed history for an already closed epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equivocation {
    pub commitment: EpochCommitment,
    pub tree: EpochTree,
}

#[derive(Debug, Clone)]
struct ClosedEpoch {
    tree: EpochTree,
    commitment: EpochCommitment,
    ledger_index: Option<u64>,
}

/// Collects digests per epoch and commits to them. Sees nothing but the
/// `(asset_id, record digest)` pairs it is sent.
#[derive(Debug, Clone)]
pub struct Operator {
    id: OperatorId,
    keypair: KeyPair,
    mitigation: Mitigation,
    open_epoch: u64,
    pending: BTreeMap<Digest, Digest>,
    closed: Vec<ClosedEpoch>,
    submissions: Vec<SubmissionReceipt>,
    received: Vec<u8>,
}

impl Operator {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R, id: OperatorId, mitigation: Mitigation) -> Self {
        Self {
            id,
            keypair: KeyPair::generate(rng),
            mitigation,
            open_epoch: 0,
            pending: BTreeMap::new(),
            closed: Vec::new(),
            submissions: Vec::new(),
            received: Vec::new(),
        }
    }

    pub fn id(&self) -> &OperatorId {
        &self.id
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public
    }

    pub fn mitigation(&self) -> Mitigation {
        self.mitigation
    }

    pub fn open_epoch(&self) -> u64 {
        self.open_epoch
    }

    pub fn last_closed_epoch(&self) -> Option<u64> {
        self.open_epoch.checked_sub(1)
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Registers this operator's key with `network` so it can publish.
    pub fn register(&self, network: &mut LedgerNetwork) {
        network.register_operator(self.id.clone(), self.keypair.public);
    }

    /// Every byte this operator has been sent.
    pub fn received_bytes(&self) -> &[u8] {
        &self.received
    }

    pub fn submissions(&self) -> &[SubmissionReceipt] {
        &self.submissions
    }

    /// Accepts a leaf for the open epoch. At most one leaf per asset per
    /// epoch.
    pub fn submit(&mut self, asset_id: Digest, record: Digest) -> Result<SubmissionReceipt> {
        self.received.extend_from_slice(asset_id.as_bytes());
        self.received.extend_from_slice(record.as_bytes());
        if self.pending.contains_key(&asset_id) {
            return Err(Rejection::DuplicateInEpoch {
                epoch: self.open_epoch,
            });
        }
        self.pending.insert(asset_id, record);
        let receipt = SubmissionReceipt {
            asset_id,
            record,
            epoch: self.open_epoch,
        };
        self.submissions.push(receipt.clone());
        Ok(receipt)
    }

    /// Builds the epoch tree, signs its root and, under DLT mitigation,
    /// certifies it on `network`. On failure the epoch stays open.
    pub fn close_epoch(&mut self, network: Option<&mut LedgerNetwork>) -> Result<EpochCommitment> {
        let leaves = self
            .pending
            .iter()
            .map(|(asset_id, record)| Leaf {
                asset_id: *asset_id,
                record: *record,
            })
            .collect();
        let tree = EpochTree::new(leaves)?;
        let commitment = EpochCommitment::signed(&self.keypair, self.id.clone(), self.open_epoch, &tree);
        let ledger_index = match (self.mitigation, network) {
            (Mitigation::Dlt, Some(net)) => Some(publish_commitment(net, commitment.clone())?.index),
            (Mitigation::Dlt, None) => {
                return Err(Rejection::invalid("DLT mitigation needs a ledger network"))
            }
            (Mitigation::SelfAttested, _) => None,
        };
        self.closed.push(ClosedEpoch {
            tree,
            commitment: commitment.clone(),
            ledger_index,
        });
        self.pending.clear();
        self.open_epoch += 1;
        Ok(commitment)
    }

    pub fn commitment(&self, epoch: u64) -> Option<&EpochCommitment> {
        self.closed.get(epoch as usize).map(|c| &c.commitment)
    }

    pub fn tree(&self, epoch: u64) -> Option<&EpochTree> {
        self.closed.get(epoch as usize).map(|c| &c.tree)
    }

    /// Proof covering `from..=to`: inclusion where the asset has a leaf,
    /// absence everywhere else.
    pub fn prove_provenance(&self, asset_id: &Digest, from: u64, to: u64) -> Result<ProofOfProvenance> {
        self.prove_provenance_with(asset_id, from, to, &[])
    }

    /// As [`Operator::prove_provenance`], but answering from `overrides`
    /// for the epochs they cover.
    pub fn prove_provenance_with(
        &self,
        asset_id: &Digest,
        from: u64,
        to: u64,
        overrides: &[Equivocation],
    ) -> Result<ProofOfProvenance> {
        if to >= self.open_epoch {
            return Err(Rejection::EpochOpen {
                epoch: self.open_epoch,
            });
        }
        if from > to {
            return Err(Rejection::invalid("empty epoch range"));
        }
        let components = (from..=to)
            .map(|epoch| {
                let closed = &self.closed[epoch as usize];
                let (tree, commitment) = overrides
                    .iter()
                    .find(|e| e.commitment.epoch == epoch)
                    .map(|e| (&e.tree, &e.commitment))
                    .unwrap_or((&closed.tree, &closed.commitment));
                EpochProof {
                    epoch,
                    commitment: commitment.clone(),
                    ledger_index: closed.ledger_index,
                    evidence: match tree.prove(asset_id) {
                        Ok(p) => EpochEvidence::Inclusion(p),
                        Err(a) => EpochEvidence::Absence(a),
                    },
                }
            })
            .collect();
        Ok(ProofOfProvenance {
            asset_id: *asset_id,
            operator_id: self.id.clone(),
            from_epoch: from,
            to_epoch: to,
            components,
        })
    }

    /// Signs a second root for a closed epoch. Adversarial; for tests and
    /// demonstrations only. The result is not published anywhere.
    pub fn equivocate(&self, epoch: u64, alternate_leaves: Vec<Leaf>) -> Result<Equivocation> {
        if epoch >= self.open_epoch {
            return Err(Rejection::EpochOpen {
                epoch: self.open_epoch,
            });
        }
        let tree = EpochTree::new(alternate_leaves)?;
        let commitment = EpochCommitment::signed(&self.keypair, self.id.clone(), epoch, &tree);
        Ok(Equivocation { commitment, tree })
    }

    /// What the operator observed: every non-genesis submission, keyed by
    /// asset id.
    pub fn observer_transcript(&self, privacy: Privacy) -> ObserverTranscript {
        ObserverTranscript {
            system: SystemLabel::uso(privacy),
            spends: self
                .submissions
                .iter()
                .filter(|s| s.record != s.asset_id)
                .map(|s| ObservedSpend {
                    consumed: vec![HexBytes(s.asset_id.0.to_vec())],
                    produced: Vec::new(),
                })
                .collect(),
        }
    }
}

/// Certifies `commitment` on `network`; a second root for the same
/// `(operator, epoch)` is refused.
pub fn publish_commitment(network: &mut LedgerNetwork, commitment: EpochCommitment) -> Result<LedgerEntry> {
    network.submit_entry(EntryKind::EpochCommitment, Payload::Epoch(commitment))
}
