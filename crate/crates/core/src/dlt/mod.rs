//! Simulated distributed ledger.
//!
//! A fixed set of peers certifies an append-only log. Each submission runs
//! one synchronous collect-signatures round: every honest peer signs the
//! proposed entry, and the entry is certified once it carries signatures
//! from at least `⌈2N/3⌉` distinct peers. Faulty peers are either silent
//! (never sign) or equivocating (sign a conflicting entry for the same
//! index instead). A network of one peer with threshold one models a
//! centralised ledger.

mod accounts;
mod audit;
mod log_io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

pub use accounts::{AccountId, AccountState, AccountTransfer, ExternalEvidence};
pub use audit::{audit_log, AuditReport, AuditViolation};
pub use log_io::{export_log, import_log, read_lines, write_lines, LogIoError};

use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature};
use crate::encoding::{Canonical, Encoder};
use crate::error::{Rejection, Result};
use crate::utxo::UtxoRecord;
use crate::uso::{EpochCommitment, OperatorId};

const ENTRY_DOMAIN: &str = "tokenlab/ledger-entry/v1";

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PeerId(pub u16);

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "peer{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryKind {
    ExternalEvidence,
    InterledgerTransfer,
    BalanceTransfer,
    UtxoTransaction,
    EpochCommitment,
}

impl EntryKind {
    fn tag(self) -> u8 {
        match self {
            EntryKind::ExternalEvidence => 1,
            EntryKind::InterledgerTransfer => 2,
            EntryKind::BalanceTransfer => 3,
            EntryKind::UtxoTransaction => 4,
            EntryKind::EpochCommitment => 5,
        }
    }
}

/// Kind-specific entry body. The kind itself lives on [`LedgerEntry`];
/// the payload shape must agree with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Evidence(ExternalEvidence),
    Transfer(AccountTransfer),
    Utxo(UtxoRecord),
    Epoch(EpochCommitment),
}

impl Payload {
    fn fits(&self, kind: EntryKind) -> bool {
        matches!(
            (kind, self),
            (EntryKind::ExternalEvidence, Payload::Evidence(_))
                | (EntryKind::InterledgerTransfer, Payload::Transfer(_))
                | (EntryKind::BalanceTransfer, Payload::Transfer(_))
                | (EntryKind::UtxoTransaction, Payload::Utxo(_))
                | (EntryKind::EpochCommitment, Payload::Epoch(_))
        )
    }
}

impl Canonical for Payload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Payload::Evidence(p) => enc.item(p),
            Payload::Transfer(p) => enc.item(p),
            Payload::Utxo(p) => enc.item(p),
            Payload::Epoch(p) => enc.item(p),
        };
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertSignature {
    pub peer: PeerId,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub index: u64,
    pub kind: EntryKind,
    pub payload: Payload,
    pub quorum_cert: Vec<CertSignature>,
}

/// The message every peer signs: `hash(index ∥ kind ∥ payload)`.
pub fn entry_digest(index: u64, kind: EntryKind, payload: &Payload) -> Digest {
    let mut enc = Encoder::new();
    enc.str(ENTRY_DOMAIN).u64(index).tag(kind.tag()).item(payload);
    crypto::hash(&enc.finish())
}

impl LedgerEntry {
    pub fn digest(&self) -> Digest {
        entry_digest(self.index, self.kind, &self.payload)
    }
}

/// Number of distinct signatures needed to certify an entry: `⌈2N/3⌉`.
pub fn quorum_threshold(peers: usize) -> usize {
    (2 * peers).div_ceil(3)
}

/// Largest fault count the threshold tolerates: `⌊(N−1)/3⌋`.
pub fn max_tolerated_faults(peers: usize) -> usize {
    peers.saturating_sub(1) / 3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerBehaviour {
    #[default]
    Honest,
    Silent,
    Equivocating,
}

#[derive(Debug, Clone)]
pub struct Peer {
    pub peer_id: PeerId,
    pub keypair: KeyPair,
    pub behaviour: PeerBehaviour,
    pub local_log: Vec<LedgerEntry>,
    /// Digest this peer signed at each index; an honest peer never signs
    /// two different digests for one index.
    votes: BTreeMap<u64, Digest>,
}

impl Peer {
    /// Signs `digest` for `index` unless this peer already voted for a
    /// different digest there.
    pub fn vote(&mut self, index: u64, digest: Digest) -> Option<Signature> {
        match self.votes.get(&index) {
            Some(prev) if *prev != digest => None,
            _ => {
                self.votes.insert(index, digest);
                Some(self.keypair.sign(digest.as_bytes()))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub peers: usize,
    /// Peers not listed are honest.
    #[serde(default)]
    pub faults: BTreeMap<PeerId, PeerBehaviour>,
}

impl NetworkConfig {
    pub fn centralised() -> Self {
        Self {
            peers: 1,
            faults: BTreeMap::new(),
        }
    }

    pub fn honest(peers: usize) -> Self {
        Self {
            peers,
            faults: BTreeMap::new(),
        }
    }

    pub fn with_fault(mut self, peer: u16, behaviour: PeerBehaviour) -> Self {
        self.faults.insert(PeerId(peer), behaviour);
        self
    }
}

/// The ledger network: peers, the certified log, and the registries that
/// payload validation consults.
#[derive(Debug, Clone)]
pub struct LedgerNetwork {
    peers: Vec<Peer>,
    log: Vec<LedgerEntry>,
    parties: BTreeSet<AccountId>,
    operators: BTreeMap<OperatorId, PublicKey>,
    epochs: BTreeMap<(OperatorId, u64), u64>,
    fork_attempts: Vec<LedgerEntry>,
}

impl LedgerNetwork {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R, config: &NetworkConfig) -> Self {
        assert!(config.peers >= 1, "a ledger network needs at least one peer");
        let peers = (0..config.peers)
            .map(|i| {
                let peer_id = PeerId(u16::try_from(i).expect("too many peers"));
                Peer {
                    peer_id,
                    keypair: KeyPair::generate(rng),
                    behaviour: config.faults.get(&peer_id).copied().unwrap_or_default(),
                    local_log: Vec::new(),
                    votes: BTreeMap::new(),
                }
            })
            .collect();
        Self {
            peers,
            log: Vec::new(),
            parties: BTreeSet::new(),
            operators: BTreeMap::new(),
            epochs: BTreeMap::new(),
            fork_attempts: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.peers.len()
    }

    pub fn threshold(&self) -> usize {
        quorum_threshold(self.peers.len())
    }

    pub fn peers(&self) -> &[Peer] {
        &self.peers
    }

    pub fn set_behaviour(&mut self, peer: PeerId, behaviour: PeerBehaviour) {
        if let Some(p) = self.peers.iter_mut().find(|p| p.peer_id == peer) {
            p.behaviour = behaviour;
        }
    }

    /// Registered peer verification keys.
    pub fn peer_keys(&self) -> BTreeMap<PeerId, PublicKey> {
        self.peers
            .iter()
            .map(|p| (p.peer_id, p.keypair.public))
            .collect()
    }

    pub fn log(&self) -> &[LedgerEntry] {
        &self.log
    }

    pub fn entry(&self, index: u64) -> Option<&LedgerEntry> {
        usize::try_from(index).ok().and_then(|i| self.log.get(i))
    }

    /// Conflicting entries that equivocating peers signed; never certified
    /// while faults stay within tolerance.
    pub fn fork_attempts(&self) -> &[LedgerEntry] {
        &self.fork_attempts
    }

    pub fn register_party(&mut self, id: AccountId) {
        self.parties.insert(id);
    }

    pub fn is_registered(&self, id: &AccountId) -> bool {
        self.parties.contains(id)
    }

    pub fn register_operator(&mut self, id: OperatorId, key: PublicKey) {
        self.operators.insert(id, key);
    }

    pub fn operator_key(&self, id: &OperatorId) -> Option<&PublicKey> {
        self.operators.get(id)
    }

    /// Ledger index of the certified commitment for `(operator, epoch)`.
    pub fn epoch_entry_index(&self, operator: &OperatorId, epoch: u64) -> Option<u64> {
        self.epochs.get(&(operator.clone(), epoch)).copied()
    }

    /// Highest certified epoch for `operator`.
    pub fn latest_epoch(&self, operator: &OperatorId) -> Option<u64> {
        self.epochs
            .range((operator.clone(), 0)..=(operator.clone(), u64::MAX))
            .next_back()
            .map(|((_, e), _)| *e)
    }

    fn validate(&self, kind: EntryKind, payload: &Payload) -> Result<()> {
        if !payload.fits(kind) {
            return Err(Rejection::invalid(format!(
                "payload shape does not match kind {kind:?}"
            )));
        }
        match payload {
            Payload::Evidence(ev) => {
                for id in &ev.fiduciaries {
                    if !self.parties.contains(id) {
                        return Err(Rejection::UnknownParty(id.to_string()));
                    }
                }
            }
            Payload::Transfer(t) => {
                if t.amount == 0 {
                    return Err(Rejection::invalid("amount must be positive"));
                }
            }
            Payload::Utxo(rec) => rec.check_well_formed()?,
            Payload::Epoch(c) => {
                let Some(key) = self.operators.get(&c.operator_id) else {
                    return Err(Rejection::UnknownParty(c.operator_id.to_string()));
                };
                if !c.verify_signature(key) {
                    return Err(Rejection::invalid("bad operator signature on commitment"));
                }
                if self.epochs.contains_key(&(c.operator_id.clone(), c.epoch)) {
                    return Err(Rejection::DuplicateEpoch {
                        operator: c.operator_id.to_string(),
                        epoch: c.epoch,
                    });
                }
            }
        }
        Ok(())
    }

    /// Runs one certification round for `(kind, payload)` at the next index.
    pub fn submit_entry(&mut self, kind: EntryKind, payload: Payload) -> Result<LedgerEntry> {
        self.validate(kind, &payload)?;
        let index = self.log.len() as u64;
        let digest = entry_digest(index, kind, &payload);

        let alternate_payload = Payload::Evidence(ExternalEvidence {
            fiduciaries: [AccountId::fork_marker(), AccountId::fork_marker()],
            tx_digest: crypto::hash_item("tokenlab/fork", &digest),
        });
        let alternate_kind = EntryKind::ExternalEvidence;
        let alternate_digest = entry_digest(index, alternate_kind, &alternate_payload);

        let mut cert = Vec::new();
        let mut fork_cert = Vec::new();
        for peer in &mut self.peers {
            match peer.behaviour {
                PeerBehaviour::Honest => {
                    if let Some(signature) = peer.vote(index, digest) {
                        cert.push(CertSignature {
                            peer: peer.peer_id,
                            signature,
                        });
                    }
                }
                PeerBehaviour::Silent => {}
                PeerBehaviour::Equivocating => {
                    if let Some(signature) = peer.vote(index, alternate_digest) {
                        fork_cert.push(CertSignature {
                            peer: peer.peer_id,
                            signature,
                        });
                    }
                }
            }
        }

        let alternate = LedgerEntry {
            index,
            kind: alternate_kind,
            payload: alternate_payload,
            quorum_cert: fork_cert,
        };
        let alternate_certified = alternate.quorum_cert.len() >= self.threshold();
        if !alternate.quorum_cert.is_empty() {
            self.fork_attempts.push(alternate.clone());
        }

        let required = self.threshold();
        if cert.len() < required {
            return Err(Rejection::NoQuorum {
                signatures: cert.len(),
                required,
            });
        }
        debug_assert!(!alternate_certified, "two certificates at one index");

        let entry = LedgerEntry {
            index,
            kind,
            payload,
            quorum_cert: cert,
        };
        if let Payload::Epoch(c) = &entry.payload {
            self.epochs.insert((c.operator_id.clone(), c.epoch), index);
        }
        for peer in &mut self.peers {
            match peer.behaviour {
                PeerBehaviour::Honest => peer.local_log.push(entry.clone()),
                PeerBehaviour::Equivocating => peer.local_log.push(alternate.clone()),
                PeerBehaviour::Silent => {}
            }
        }
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Mode 1: fiduciaries commit that a transfer between their externally
    /// managed accounts happened. Only the two fiduciary ids and the digest
    /// reach the ledger.
    pub fn record_external_evidence(
        &mut self,
        fiduciaries: (AccountId, AccountId),
        tx_digest: Digest,
    ) -> Result<LedgerEntry> {
        self.submit_entry(
            EntryKind::ExternalEvidence,
            Payload::Evidence(ExternalEvidence {
                fiduciaries: [fiduciaries.0, fiduciaries.1],
                tx_digest,
            }),
        )
    }

    /// Mode 2: the ledger is the record of a transfer between externally
    /// managed accounts. Balances are not checked here.
    pub fn record_interledger_transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        amount: u64,
    ) -> Result<LedgerEntry> {
        self.submit_entry(
            EntryKind::InterledgerTransfer,
            Payload::Transfer(AccountTransfer { from, to, amount }),
        )
    }

    /// Mode 3: the ledger manages the balances itself.
    pub fn apply_balance_transfer(
        &mut self,
        state: &AccountState,
        from: AccountId,
        to: AccountId,
        amount: u64,
    ) -> Result<(LedgerEntry, AccountState)> {
        let transfer = AccountTransfer { from, to, amount };
        let next = state.apply(&transfer)?;
        let entry = self.submit_entry(EntryKind::BalanceTransfer, Payload::Transfer(transfer))?;
        Ok((entry, next))
    }

    pub fn audit(&self) -> AuditReport {
        audit_log(&self.log, &self.peer_keys(), self.threshold())
    }
}
