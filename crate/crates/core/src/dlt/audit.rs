use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LedgerEntry, PeerId};
use crate::crypto::{self, PublicKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum AuditViolation {
    IndexGap { expected: u64, found: u64 },
    KindMismatch,
    UnknownPeer { peer: PeerId },
    DuplicateSigner { peer: PeerId },
    BadSignature { peer: PeerId },
    InsufficientQuorum { signatures: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditReport {
    Clean { entries: usize },
    Violation {
        index: u64,
        #[serde(flatten)]
        violation: AuditViolation,
    },
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        matches!(self, AuditReport::Clean { .. })
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditReport::Clean { entries } => write!(f, "CLEAN ({entries} entries)"),
            AuditReport::Violation { index, violation } => {
                write!(f, "VIOLATION at entry {index}: {violation:?}")
            }
        }
    }
}

/// Checks index contiguity and every quorum certificate against the
/// registered peer keys. Reports the first problem found.
pub fn audit_log(
    log: &[LedgerEntry],
    peer_keys: &BTreeMap<PeerId, PublicKey>,
    threshold: usize,
) -> AuditReport {
    for (pos, entry) in log.iter().enumerate() {
        let expected = pos as u64;
        let violation = |v| AuditReport::Violation {
            index: entry.index,
            violation: v,
        };
        if entry.index != expected {
            return AuditReport::Violation {
                index: expected,
                violation: AuditViolation::IndexGap {
                    expected,
                    found: entry.index,
                },
            };
        }
        if !entry.payload.fits(entry.kind) {
            return violation(AuditViolation::KindMismatch);
        }
        let digest = entry.digest();
        let mut signers = BTreeSet::new();
        for cs in &entry.quorum_cert {
            let Some(key) = peer_keys.get(&cs.peer) else {
                return violation(AuditViolation::UnknownPeer { peer: cs.peer });
            };
            if !signers.insert(cs.peer) {
                return violation(AuditViolation::DuplicateSigner { peer: cs.peer });
            }
            if !crypto::verify(key, digest.as_bytes(), &cs.signature) {
                return violation(AuditViolation::BadSignature { peer: cs.peer });
            }
        }
        if signers.len() < threshold {
            return violation(AuditViolation::InsufficientQuorum {
                signatures: signers.len(),
                required: threshold,
            });
        }
    }
    AuditReport::Clean { entries: log.len() }
}
