//! Measurements over completed runs: how many spends an observer can link
//! to issuance, how the ledger grows with transaction count, and whether
//! an operator's equivocation is visible.
//!
//! Every function here takes only observer-visible inputs: ledger entries,
//! issuer transcripts and roots quoted in proofs.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, KeyPair};
use crate::dlt::{EntryKind, LedgerEntry, LedgerNetwork, NetworkConfig, Payload};
use crate::error::{Rejection, Result};
use crate::transcript::{HexBytes, IssuanceTranscript, ObservedSpend, ObserverTranscript, SystemLabel};
use crate::utxo::{TxKind, TxOutput, UtxoLedger, UtxoRecord, UtxoTransaction};
use crate::uso::{self, Mitigation, Operator, OperatorId, ProofOfProvenance, UsoIssuer};
use crate::Privacy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkageMethod {
    SerialEquality,
    GraphPath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageReport {
    pub mode: SystemLabel,
    pub pairs_total: u64,
    pub pairs_linked: u64,
    /// `graph-path` if any linked spend needed more than one hop.
    pub method: LinkageMethod,
    pub linked_by_serial: u64,
    pub linked_by_path: u64,
}

/// What a ledger observer sees of UTXO spends: consumed and produced
/// token identifiers. Mints and blind issuances are not spends.
pub fn utxo_observer_transcript(log: &[LedgerEntry], privacy: Privacy) -> ObserverTranscript {
    let spends = log
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Utxo(UtxoRecord::Transaction(tx)) if tx.kind == TxKind::Transfer => {
                Some(ObservedSpend {
                    consumed: tx.inputs.iter().map(|o| HexBytes(o.to_bytes())).collect(),
                    produced: tx.outpoints().iter().map(|o| HexBytes(o.to_bytes())).collect(),
                })
            }
            Payload::Utxo(UtxoRecord::PrivateSpend { serial, .. }) => Some(ObservedSpend {
                consumed: vec![HexBytes(serial.0.to_vec())],
                produced: Vec::new(),
            }),
            _ => None,
        })
        .collect();
    ObserverTranscript {
        system: SystemLabel::utxo(privacy),
        spends,
    }
}

/// Counts spends whose consumed token can be tied to something the issuer
/// saw, either directly or by walking back through earlier spends.
pub fn linkage_analysis(
    issuance: &IssuanceTranscript,
    observed: &ObserverTranscript,
) -> Result<LinkageReport> {
    if issuance.system != observed.system {
        return Err(Rejection::invalid(format!(
            "transcripts from different systems: {} vs {}",
            issuance.system, observed.system
        )));
    }
    let issued: BTreeSet<&HexBytes> = issuance.records.iter().flat_map(|r| &r.visible).collect();
    let mut producer: BTreeMap<&HexBytes, &ObservedSpend> = BTreeMap::new();
    for s in &observed.spends {
        for p in &s.produced {
            producer.insert(p, s);
        }
    }

    // Hops from `id` back to an issued id, if any.
    let origin_hops = |id: &HexBytes| -> Option<usize> {
        let mut frontier = vec![id];
        let mut seen = BTreeSet::new();
        let mut hops = 0;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for x in frontier {
                if issued.contains(x) {
                    return Some(hops);
                }
                if seen.insert(x) {
                    if let Some(s) = producer.get(x) {
                        next.extend(&s.consumed);
                    }
                }
            }
            frontier = next;
            hops += 1;
        }
        None
    };

    let (mut by_serial, mut by_path) = (0, 0);
    for s in &observed.spends {
        match s.consumed.iter().filter_map(origin_hops).min() {
            Some(0) => by_serial += 1,
            Some(_) => by_path += 1,
            None => {}
        }
    }
    Ok(LinkageReport {
        mode: observed.system,
        pairs_total: observed.spends.len() as u64,
        pairs_linked: by_serial + by_path,
        method: if by_path > 0 {
            LinkageMethod::GraphPath
        } else {
            LinkageMethod::SerialEquality
        },
        linked_by_serial: by_serial,
        linked_by_path: by_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub transactions: u64,
    /// Entries appended while the transactions ran.
    pub ledger_entries: u64,
    /// Entries appended by setup (mints or issuance) before measuring.
    pub setup_entries: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub mode: SystemLabel,
    pub epochs: u64,
    pub points: Vec<GrowthPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub series: Vec<GrowthSeries>,
}

impl GrowthReport {
    /// One row per point: `mode,epochs,transactions,ledger_entries,setup_entries`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mode", "epochs", "transactions", "ledger_entries", "setup_entries"])
            .expect("in-memory write");
        for s in &self.series {
            for p in &s.points {
                w.write_record([
                    s.mode.to_string(),
                    s.epochs.to_string(),
                    p.transactions.to_string(),
                    p.ledger_entries.to_string(),
                    p.setup_entries.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// `n` single-hop transfers on a transparent UTXO ledger, after one mint of
/// `n` outputs.
pub fn utxo_growth_point(seed: u64, n: u64) -> Result<GrowthPoint> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let net = LedgerNetwork::new(&mut rng, &NetworkConfig::centralised());
    let authority = KeyPair::generate(&mut rng);
    let owner = KeyPair::generate(&mut rng);
    let mut ledger = UtxoLedger::transparent(net, authority.public);
    let outputs = (0..n).map(|_| TxOutput { value: 1, owner: owner.public }).collect();
    let setup = if n == 0 {
        0
    } else {
        ledger.mint(&authority, outputs)?;
        ledger.network().log().len() as u64
    };
    let ops: Vec<_> = ledger.live().keys().copied().collect();
    for op in ops {
        let out = TxOutput { value: 1, owner: owner.public };
        ledger.spend(UtxoTransaction::transfer(vec![op], vec![out], &[&owner]))?;
    }
    Ok(GrowthPoint {
        transactions: n,
        ledger_entries: ledger.network().log().len() as u64 - setup,
        setup_entries: setup,
    })
}

/// `n` transfers spread over `epochs` closed epochs, after issuing `n`
/// assets in a setup epoch. Requires `epochs >= 1` when `n > 0`.
pub fn uso_growth_point(seed: u64, n: u64, epochs: u64) -> Result<GrowthPoint> {
    if n > 0 && epochs == 0 {
        return Err(Rejection::invalid("transactions need at least one epoch"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut net = LedgerNetwork::new(&mut rng, &NetworkConfig::centralised());
    let mut op = Operator::new(&mut rng, OperatorId::new("op"), Mitigation::Dlt);
    op.register(&mut net);
    let mut issuer = UsoIssuer::new(&mut rng, Privacy::Transparent, &BTreeSet::new());
    let owner = KeyPair::generate(&mut rng);
    let mut assets = Vec::with_capacity(n as usize);
    for _ in 0..n {
        assets.push(uso::issue_asset(&mut rng, &mut op, &mut issuer, 1, owner.public)?.0);
    }
    op.close_epoch(Some(&mut net))?;
    let setup = net.log().len() as u64;
    let per_epoch = if epochs == 0 { 0 } else { n.div_ceil(epochs) as usize };
    let mut chunks = assets.chunks(per_epoch.max(1));
    for _ in 0..epochs {
        for a in chunks.next().unwrap_or_default() {
            uso::transfer(a, &owner, owner.public, &mut op)?;
        }
        op.close_epoch(Some(&mut net))?;
    }
    Ok(GrowthPoint {
        transactions: n,
        ledger_entries: net.log().len() as u64 - setup,
        setup_entries: setup,
    })
}

/// UTXO and USO series over the same transaction counts.
pub fn growth_analysis(seed: u64, counts: &[u64], epochs: u64) -> Result<GrowthReport> {
    let utxo = counts
        .iter()
        .map(|&n| utxo_growth_point(seed, n))
        .collect::<Result<_>>()?;
    let uso = counts
        .iter()
        .map(|&n| uso_growth_point(seed, n, epochs))
        .collect::<Result<_>>()?;
    Ok(GrowthReport {
        series: vec![
            GrowthSeries {
                mode: SystemLabel::utxo(Privacy::Transparent),
                epochs: 0,
                points: utxo,
            },
            GrowthSeries {
                mode: SystemLabel::uso(Privacy::Transparent),
                epochs,
                points: uso,
            },
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivocationFinding {
    pub operator_id: OperatorId,
    pub epoch: u64,
    /// Root certified on the ledger, if one exists.
    pub certified_root: Option<Digest>,
    /// Distinct roots seen in proofs for this epoch.
    pub presented_roots: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EquivocationAudit {
    Findings { findings: Vec<EquivocationFinding> },
    /// No ledger ground truth to compare against.
    Undetectable,
}

impl EquivocationAudit {
    pub fn findings(&self) -> &[EquivocationFinding] {
        match self {
            EquivocationAudit::Findings { findings } => findings,
            EquivocationAudit::Undetectable => &[],
        }
    }
}

/// Compares roots quoted in `proofs` with the ledger. One finding per
/// `(operator, epoch)` whose quoted root differs from the certified one, or
/// that has two different quoted roots.
pub fn equivocation_audit(
    log: &[LedgerEntry],
    proofs: &[ProofOfProvenance],
    mitigation: Mitigation,
) -> EquivocationAudit {
    if mitigation == Mitigation::SelfAttested {
        return EquivocationAudit::Undetectable;
    }
    let certified: BTreeMap<(OperatorId, u64), Digest> = log
        .iter()
        .filter(|e| e.kind == EntryKind::EpochCommitment)
        .filter_map(|e| match &e.payload {
            Payload::Epoch(c) => Some(((c.operator_id.clone(), c.epoch), c.root)),
            _ => None,
        })
        .collect();
    let mut presented: BTreeMap<(OperatorId, u64), BTreeSet<Digest>> = BTreeMap::new();
    for c in proofs.iter().flat_map(|p| &p.components) {
        presented
            .entry((c.commitment.operator_id.clone(), c.commitment.epoch))
            .or_default()
            .insert(c.commitment.root);
    }
    let findings = presented
        .into_iter()
        .filter_map(|(key, roots)| {
            let certified_root = certified.get(&key).copied();
            let clean = roots.len() == 1 && certified_root.is_some_and(|r| roots.contains(&r));
            (!clean).then(|| EquivocationFinding {
                operator_id: key.0,
                epoch: key.1,
                certified_root,
                presented_roots: roots.into_iter().collect(),
            })
        })
        .collect();
    EquivocationAudit::Findings { findings }
}

/// Deterministic pretty JSON with a trailing newline.
pub fn to_report_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    s
}
