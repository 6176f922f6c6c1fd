//! Endogenous token tracking: the ledger holds the state of every token.
//!
//! Transparent mode keeps a live set of `(tx_id, output_index)` outputs
//! owned by Ed25519 keys; transactions retire their inputs and mint their
//! outputs. Private mode issues fixed-denomination bearer tokens with blind
//! signatures, so the issuer never sees a serial until it is deposited.

mod state;
mod types;

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

pub use state::{SpentSet, UtxoState};
pub use types::{
    private_token_message, DenominationCount, OutPoint, PrivateToken, Token, TokenId, TxKind,
    TxOutput, UtxoRecord, UtxoTransaction,
};

use crate::crypto::{
    self, BlindPublicKey, BlindSecretKey, BlindSignature, BlindSignatureTranscript, BlindedMessage,
    Digest, KeyPair, PublicKey, Serial, UnblindingState, BLIND_KEY_BITS,
};
use crate::dlt::{EntryKind, LedgerEntry, LedgerNetwork, Payload, PeerBehaviour, PeerId};
use crate::error::{Rejection, Result};
use crate::transcript::{HexBytes, IssuanceRecord, IssuanceTranscript, SystemLabel};
use crate::Privacy;

pub const DEFAULT_DENOMINATIONS: [u64; 4] = [1, 5, 10, 50];

/// One step of a provenance path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub entry_index: u64,
    pub tx_id: Digest,
    pub kind: TxKind,
}

/// Issuer for private mode: one blind-signing key per denomination, so a
/// signature also attests the value.
#[derive(Debug, Clone)]
struct BlindIssuer {
    keys: BTreeMap<u64, BlindSecretKey>,
}

#[derive(Debug, Clone)]
pub struct UtxoLedger {
    network: LedgerNetwork,
    privacy: Privacy,
    authority: PublicKey,
    issuer: Option<BlindIssuer>,
    state: UtxoState,
    tx_entries: BTreeMap<Digest, u64>,
    issuer_transcript: Vec<IssuanceRecord>,
    mints: u64,
}

impl UtxoLedger {
    /// Transparent ledger whose mints must be signed by `authority`.
    pub fn transparent(network: LedgerNetwork, authority: PublicKey) -> Self {
        Self {
            network,
            privacy: Privacy::Transparent,
            authority,
            issuer: None,
            state: UtxoState::default(),
            tx_entries: BTreeMap::new(),
            issuer_transcript: Vec::new(),
            mints: 0,
        }
    }

    /// Private ledger with a fresh blind-signing key per denomination.
    pub fn private<R: RngCore + CryptoRng>(
        rng: &mut R,
        network: LedgerNetwork,
        denominations: &BTreeSet<u64>,
    ) -> Result<Self> {
        Self::private_with_key_bits(rng, network, denominations, BLIND_KEY_BITS)
    }

    pub fn private_with_key_bits<R: RngCore + CryptoRng>(
        rng: &mut R,
        network: LedgerNetwork,
        denominations: &BTreeSet<u64>,
        key_bits: usize,
    ) -> Result<Self> {
        if denominations.is_empty() || denominations.contains(&0) {
            return Err(Rejection::invalid("denominations must be positive and non-empty"));
        }
        let keys = denominations
            .iter()
            .map(|&d| (d, BlindSecretKey::generate(rng, key_bits)))
            .collect();
        Ok(Self {
            network,
            privacy: Privacy::Private,
            authority: PublicKey([0; 32]),
            issuer: Some(BlindIssuer { keys }),
            state: UtxoState::default(),
            tx_entries: BTreeMap::new(),
            issuer_transcript: Vec::new(),
            mints: 0,
        })
    }

    pub fn privacy(&self) -> Privacy {
        self.privacy
    }

    pub fn network(&self) -> &LedgerNetwork {
        &self.network
    }

    /// Changes how one ledger peer behaves from now on.
    pub fn set_peer_behaviour(&mut self, peer: PeerId, behaviour: PeerBehaviour) {
        self.network.set_behaviour(peer, behaviour);
    }

    pub fn state(&self) -> &UtxoState {
        &self.state
    }

    pub fn spent(&self) -> &SpentSet {
        &self.state.spent
    }

    pub fn live(&self) -> &BTreeMap<OutPoint, TxOutput> {
        &self.state.live
    }

    pub fn total_supply(&self) -> u128 {
        self.state.minted
    }

    pub fn denominations(&self) -> BTreeSet<u64> {
        self.issuer
            .as_ref()
            .map(|i| i.keys.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn issuer_key(&self, denomination: u64) -> Option<&BlindPublicKey> {
        self.issuer
            .as_ref()
            .and_then(|i| i.keys.get(&denomination))
            .map(BlindSecretKey::public)
    }

    /// What the issuer saw at issuance time.
    pub fn issuance_transcript(&self) -> IssuanceTranscript {
        IssuanceTranscript {
            system: SystemLabel::utxo(self.privacy),
            records: self.issuer_transcript.clone(),
        }
    }

    fn record(&mut self, record: UtxoRecord) -> Result<LedgerEntry> {
        let entry = self
            .network
            .submit_entry(EntryKind::UtxoTransaction, Payload::Utxo(record.clone()))?;
        if let UtxoRecord::Transaction(tx) = &record {
            self.tx_entries.insert(tx.tx_id(), entry.index);
        }
        self.state.apply(&record);
        Ok(entry)
    }

    fn require(&self, mode: Privacy) -> Result<()> {
        if self.privacy != mode {
            return Err(Rejection::invalid(format!(
                "operation requires {mode:?} mode"
            )));
        }
        Ok(())
    }

    /// Creates new live tokens. Only the configured authority may mint.
    pub fn mint(&mut self, authority: &KeyPair, outputs: Vec<TxOutput>) -> Result<UtxoTransaction> {
        self.require(Privacy::Transparent)?;
        if authority.public != self.authority {
            return Err(Rejection::UnauthorisedIssue);
        }
        let mut tx = UtxoTransaction::unsigned(TxKind::Mint, self.mints, Vec::new(), outputs);
        tx.witness = vec![authority.sign(tx.tx_id().as_bytes())];
        tx.check_well_formed()?;
        self.record(UtxoRecord::Transaction(tx.clone()))?;
        self.issuer_transcript.extend(tx.outpoints().iter().map(|op| IssuanceRecord {
            visible: vec![HexBytes(op.to_bytes())],
        }));
        self.mints += 1;
        Ok(tx)
    }

    /// Checks a transfer against the current state without changing it.
    pub fn check_spend(&self, tx: &UtxoTransaction) -> Result<()> {
        self.require(Privacy::Transparent)?;
        if tx.kind != TxKind::Transfer {
            return Err(Rejection::invalid("only the authority mints"));
        }
        tx.check_well_formed()?;
        let mut owners = Vec::with_capacity(tx.inputs.len());
        let mut input_value: u64 = 0;
        for input in &tx.inputs {
            if self.state.spent.contains(&TokenId::Output(*input)) {
                return Err(Rejection::DoubleSpend(input.to_string()));
            }
            let Some(out) = self.state.live.get(input) else {
                return Err(Rejection::UnknownToken(input.to_string()));
            };
            input_value = input_value
                .checked_add(out.value)
                .ok_or_else(|| Rejection::invalid("input value overflow"))?;
            owners.push(out.owner);
        }
        let output_value = tx.output_value().unwrap_or(u64::MAX);
        if input_value != output_value {
            return Err(Rejection::ValueMismatch {
                inputs: input_value,
                outputs: output_value,
            });
        }
        let id = tx.tx_id();
        for (owner, sig) in owners.iter().zip(&tx.witness) {
            if !crypto::verify(owner, id.as_bytes(), sig) {
                return Err(Rejection::BadSignature);
            }
        }
        Ok(())
    }

    /// Retires the inputs of `tx` and makes its outputs live. Nothing
    /// changes on rejection.
    pub fn spend(&mut self, tx: UtxoTransaction) -> Result<LedgerEntry> {
        self.check_spend(&tx)?;
        self.record(UtxoRecord::Transaction(tx))
    }

    fn issuer_for(&self, denomination: u64) -> Result<&BlindSecretKey> {
        self.issuer
            .as_ref()
            .and_then(|i| i.keys.get(&denomination))
            .ok_or(Rejection::BadDenomination(denomination))
    }

    /// Blind-signs one token of `denomination`. The ledger records only
    /// the denomination and a count of one.
    pub fn issue_private(
        &mut self,
        denomination: u64,
        blinded: &BlindedMessage,
    ) -> Result<BlindSignature> {
        self.require(Privacy::Private)?;
        let key = self.issuer_for(denomination)?;
        let signature = crypto::blind_sign(key, blinded)
            .map_err(|e| Rejection::invalid(e.to_string()))?;
        let issuer_key = key.public().clone();
        self.record(UtxoRecord::PrivateIssue {
            denomination,
            count: 1,
        })?;
        self.note_blind_issuance(blinded, &signature, issuer_key);
        Ok(signature)
    }

    fn note_blind_issuance(
        &mut self,
        blinded: &BlindedMessage,
        signature: &BlindSignature,
        issuer_key: BlindPublicKey,
    ) {
        let t = BlindSignatureTranscript {
            blinded_message: blinded.clone(),
            blind_signature: signature.clone(),
            issuer_key,
        };
        self.issuer_transcript.push(IssuanceRecord::from_blind(&t));
    }

    /// Deposits `token` and blind-signs replacement tokens of the same
    /// total value. The entry records only the token's denomination and
    /// serial, plus counts of the replacements.
    pub fn spend_private(
        &mut self,
        token: &PrivateToken,
        replacements: &[(u64, BlindedMessage)],
    ) -> Result<(LedgerEntry, Vec<BlindSignature>)> {
        self.require(Privacy::Private)?;
        let valid = self.issuer_key(token.denomination).is_some_and(|k| {
            crypto::verify_blind(
                k,
                &private_token_message(token.denomination, &token.serial),
                &token.issuer_signature,
            )
        });
        if !valid {
            return Err(Rejection::BadSignature);
        }
        if self.state.spent.contains(&TokenId::Serial(token.serial)) {
            return Err(Rejection::DoubleSpend(format!("serial {}", token.serial)));
        }
        if replacements.is_empty() {
            return Err(Rejection::invalid("deposit needs at least one replacement"));
        }
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        let mut total: u64 = 0;
        let mut signatures = Vec::with_capacity(replacements.len());
        for (denomination, blinded) in replacements {
            let key = self.issuer_for(*denomination)?;
            signatures.push(
                crypto::blind_sign(key, blinded).map_err(|e| Rejection::invalid(e.to_string()))?,
            );
            *counts.entry(*denomination).or_default() += 1;
            total = total.saturating_add(*denomination);
        }
        if total != token.denomination {
            return Err(Rejection::ValueMismatch {
                inputs: token.denomination,
                outputs: total,
            });
        }
        let entry = self.record(UtxoRecord::PrivateSpend {
            denomination: token.denomination,
            serial: token.serial,
            reissued: counts
                .into_iter()
                .map(|(denomination, count)| DenominationCount {
                    denomination,
                    count,
                })
                .collect(),
        })?;
        for ((denomination, blinded), sig) in replacements.iter().zip(&signatures) {
            let key = self.issuer_for(*denomination)?.public().clone();
            self.note_blind_issuance(blinded, sig, key);
        }
        Ok((entry, signatures))
    }

    /// The chain of transactions from `token` back to its mint, following
    /// the first input at each hop.
    pub fn trace(&self, token: &OutPoint) -> Result<Vec<TraceStep>> {
        if self.privacy == Privacy::Private {
            return Err(Rejection::NotTraceable);
        }
        let mut path = Vec::new();
        let mut cursor = token.tx_id;
        loop {
            let Some(&entry_index) = self.tx_entries.get(&cursor) else {
                return Err(Rejection::UnknownToken(token.to_string()));
            };
            let Some(LedgerEntry {
                payload: Payload::Utxo(UtxoRecord::Transaction(tx)),
                ..
            }) = self.network.entry(entry_index)
            else {
                return Err(Rejection::invalid("transaction index out of sync"));
            };
            if path.is_empty() && token.index as usize >= tx.outputs.len() {
                return Err(Rejection::UnknownToken(token.to_string()));
            }
            path.push(TraceStep {
                entry_index,
                tx_id: cursor,
                kind: tx.kind,
            });
            match tx.kind {
                TxKind::Mint => return Ok(path),
                TxKind::Transfer => cursor = tx.inputs[0].tx_id,
            }
        }
    }
}

/// Wallet-side state for one pending private withdrawal.
#[derive(Debug, Clone)]
pub struct TokenRequest {
    pub serial: Serial,
    pub denomination: u64,
    pub blinded: BlindedMessage,
    unblinding: UnblindingState,
}

impl TokenRequest {
    pub fn new<R: RngCore + CryptoRng>(
        rng: &mut R,
        issuer_key: &BlindPublicKey,
        denomination: u64,
    ) -> Self {
        let serial = Serial::random(rng);
        let (blinded, unblinding) = crypto::blind(
            rng,
            issuer_key,
            &private_token_message(denomination, &serial),
        );
        Self {
            serial,
            denomination,
            blinded,
            unblinding,
        }
    }

    pub fn finish(self, signature: &BlindSignature) -> PrivateToken {
        PrivateToken {
            serial: self.serial,
            denomination: self.denomination,
            issuer_signature: crypto::unblind(signature, &self.unblinding),
        }
    }
}

/// Runs both sides of a private withdrawal of one `denomination` token.
pub fn withdraw<R: RngCore + CryptoRng>(
    rng: &mut R,
    ledger: &mut UtxoLedger,
    denomination: u64,
) -> Result<PrivateToken> {
    let key = ledger
        .issuer_key(denomination)
        .ok_or(Rejection::BadDenomination(denomination))?
        .clone();
    let request = TokenRequest::new(rng, &key, denomination);
    let sig = ledger.issue_private(denomination, &request.blinded)?;
    Ok(request.finish(&sig))
}

/// Deposits `token`, receiving fresh private tokens of `split`
/// denominations.
pub fn pay_private<R: RngCore + CryptoRng>(
    rng: &mut R,
    ledger: &mut UtxoLedger,
    token: &PrivateToken,
    split: &[u64],
) -> Result<(LedgerEntry, Vec<PrivateToken>)> {
    let mut requests = Vec::with_capacity(split.len());
    for &d in split {
        let key = ledger
            .issuer_key(d)
            .ok_or(Rejection::BadDenomination(d))?
            .clone();
        requests.push(TokenRequest::new(rng, &key, d));
    }
    let blinded: Vec<_> = requests
        .iter()
        .map(|r| (r.denomination, r.blinded.clone()))
        .collect();
    let (entry, sigs) = ledger.spend_private(token, &blinded)?;
    let tokens = requests
        .into_iter()
        .zip(&sigs)
        .map(|(r, s)| r.finish(s))
        .collect();
    Ok((entry, tokens))
}
