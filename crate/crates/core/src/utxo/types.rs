use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{self, BlindSigned, Digest, KeyPair, PublicKey, Serial, Signature};
use crate::encoding::{Canonical, Encoder};
use crate::error::{Rejection, Result};

const TX_DOMAIN: &str = "tokenlab/utxo-tx/v1";
const PRIVATE_TOKEN_DOMAIN: &str = "tokenlab/private-token/v1";

/// Reference to output `index` of transaction `tx_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutPoint {
    pub tx_id: Digest,
    pub index: u32,
}

impl OutPoint {
    /// `tx_id ∥ index` (36 bytes).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = self.tx_id.0.to_vec();
        b.extend_from_slice(&self.index.to_be_bytes());
        b
    }
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tx_id, self.index)
    }
}

impl Canonical for OutPoint {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.tx_id).u32(self.index);
    }
}

/// Identifier under which a token enters the spent set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenId {
    Output(OutPoint),
    Serial(Serial),
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenId::Output(o) => o.fmt(f),
            TokenId::Serial(s) => write!(f, "serial:{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOutput {
    pub value: u64,
    pub owner: PublicKey,
}

impl Canonical for TxOutput {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.value).item(&self.owner);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Mint,
    Transfer,
}

/// A transparent-mode transaction. Mints have no inputs and one witness
/// signature by the issuing authority; transfers carry one witness per
/// input, signed by that input's owner. Witnesses sign `tx_id`, which
/// covers every field except the witnesses themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtxoTransaction {
    pub kind: TxKind,
    pub nonce: u64,
    pub inputs: Vec<OutPoint>,
    pub outputs: Vec<TxOutput>,
    pub witness: Vec<Signature>,
}

impl UtxoTransaction {
    pub fn unsigned(kind: TxKind, nonce: u64, inputs: Vec<OutPoint>, outputs: Vec<TxOutput>) -> Self {
        Self {
            kind,
            nonce,
            inputs,
            outputs,
            witness: Vec::new(),
        }
    }

    /// Builds a transfer signed by `signers`, one per input in order.
    pub fn transfer(inputs: Vec<OutPoint>, outputs: Vec<TxOutput>, signers: &[&KeyPair]) -> Self {
        let mut tx = Self::unsigned(TxKind::Transfer, 0, inputs, outputs);
        let id = tx.tx_id();
        tx.witness = signers.iter().map(|k| k.sign(id.as_bytes())).collect();
        tx
    }

    pub fn tx_id(&self) -> Digest {
        let mut enc = Encoder::new();
        enc.str(TX_DOMAIN)
            .tag(match self.kind {
                TxKind::Mint => 0,
                TxKind::Transfer => 1,
            })
            .u64(self.nonce)
            .seq(&self.inputs, |e, i| {
                e.item(i);
            })
            .seq(&self.outputs, |e, o| {
                e.item(o);
            });
        crypto::hash(&enc.finish())
    }

    pub fn outpoint(&self, index: u32) -> OutPoint {
        OutPoint {
            tx_id: self.tx_id(),
            index,
        }
    }

    pub fn outpoints(&self) -> Vec<OutPoint> {
        let tx_id = self.tx_id();
        (0..self.outputs.len() as u32)
            .map(|index| OutPoint { tx_id, index })
            .collect()
    }

    pub fn output_value(&self) -> Option<u64> {
        self.outputs
            .iter()
            .try_fold(0u64, |acc, o| acc.checked_add(o.value))
    }

    pub fn check_well_formed(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(Rejection::invalid("transaction has no outputs"));
        }
        if self.outputs.iter().any(|o| o.value == 0) {
            return Err(Rejection::invalid("output value must be positive"));
        }
        if self.output_value().is_none() {
            return Err(Rejection::invalid("output value overflow"));
        }
        if u32::try_from(self.outputs.len()).is_err() {
            return Err(Rejection::invalid("too many outputs"));
        }
        match self.kind {
            TxKind::Mint => {
                if !self.inputs.is_empty() || self.witness.len() != 1 {
                    return Err(Rejection::invalid(
                        "mint takes no inputs and one authority witness",
                    ));
                }
            }
            TxKind::Transfer => {
                if self.inputs.is_empty() {
                    return Err(Rejection::invalid("transfer has no inputs"));
                }
                if self.witness.len() != self.inputs.len() {
                    return Err(Rejection::invalid("one witness per input required"));
                }
                let distinct: BTreeSet<_> = self.inputs.iter().collect();
                if distinct.len() != self.inputs.len() {
                    return Err(Rejection::invalid("input listed twice"));
                }
            }
        }
        Ok(())
    }
}

impl Canonical for UtxoTransaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.tx_id()).seq(&self.witness, |e, w| {
            e.item(w);
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DenominationCount {
    pub denomination: u64,
    pub count: u64,
}

/// Ledger payload for `UTXO_TRANSACTION` entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtxoRecord {
    Transaction(UtxoTransaction),
    /// Blind issuance: only the denomination and how many were issued.
    PrivateIssue { denomination: u64, count: u64 },
    /// Deposit of a private token; `reissued` counts the blind replacement
    /// tokens handed back, per denomination.
    PrivateSpend {
        denomination: u64,
        serial: Serial,
        reissued: Vec<DenominationCount>,
    },
}

impl UtxoRecord {
    pub fn check_well_formed(&self) -> Result<()> {
        match self {
            UtxoRecord::Transaction(tx) => tx.check_well_formed(),
            UtxoRecord::PrivateIssue {
                denomination,
                count,
            } => {
                if *denomination == 0 || *count == 0 {
                    return Err(Rejection::invalid("empty private issuance"));
                }
                Ok(())
            }
            UtxoRecord::PrivateSpend {
                denomination,
                reissued,
                ..
            } => {
                let total = reissued.iter().try_fold(0u64, |acc, r| {
                    r.denomination
                        .checked_mul(r.count)
                        .and_then(|v| acc.checked_add(v))
                });
                if total != Some(*denomination) {
                    return Err(Rejection::invalid("reissued value differs from deposit"));
                }
                Ok(())
            }
        }
    }
}

impl Canonical for UtxoRecord {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            UtxoRecord::Transaction(tx) => {
                enc.tag(0).item(tx);
            }
            UtxoRecord::PrivateIssue {
                denomination,
                count,
            } => {
                enc.tag(1).u64(*denomination).u64(*count);
            }
            UtxoRecord::PrivateSpend {
                denomination,
                serial,
                reissued,
            } => {
                enc.tag(2)
                    .u64(*denomination)
                    .item(serial)
                    .seq(reissued, |e, r| {
                        e.u64(r.denomination).u64(r.count);
                    });
            }
        }
    }
}

/// A bearer token from blind issuance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateToken {
    pub serial: Serial,
    pub denomination: u64,
    pub issuer_signature: BlindSigned,
}

/// The message an issuer signs for a private token: `denomination ∥ serial`.
pub fn private_token_message(denomination: u64, serial: &Serial) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.str(PRIVATE_TOKEN_DOMAIN).u64(denomination).item(serial);
    enc.finish()
}

/// A token as the ledger tracks it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Token {
    Transparent { origin: OutPoint, output: TxOutput },
    Private(PrivateToken),
}

impl Token {
    pub fn id(&self) -> TokenId {
        match self {
            Token::Transparent { origin, .. } => TokenId::Output(*origin),
            Token::Private(p) => TokenId::Serial(p.serial),
        }
    }

    pub fn value(&self) -> u64 {
        match self {
            Token::Transparent { output, .. } => output.value,
            Token::Private(p) => p.denomination,
        }
    }
}
