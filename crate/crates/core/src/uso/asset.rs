use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::operator::{Operator, OperatorId, ProofOfProvenance, SubmissionReceipt};
use crate::crypto::{
    self, BlindPublicKey, BlindSecretKey, BlindSignatureTranscript, BlindSigned, Digest, KeyPair,
    PublicKey, Serial, Signature, BLIND_KEY_BITS,
};
use crate::encoding::{Canonical, Encoder};
use crate::error::{Rejection, Result};
use crate::transcript::{HexBytes, IssuanceRecord, IssuanceTranscript, SystemLabel};
use crate::Privacy;

const GENESIS_BODY_DOMAIN: &str = "tokenlab/uso-genesis-body/v1";
const GENESIS_DOMAIN: &str = "tokenlab/uso-genesis/v1";
const UPDATE_SIGN_DOMAIN: &str = "tokenlab/uso-update-body/v1";
const UPDATE_DOMAIN: &str = "tokenlab/uso-update/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuerSignature {
    Plain(Signature),
    Blind(BlindSigned),
}

/// Creation record of an asset. In transparent mode the issuer signs it in
/// the clear; in blind mode it signs a blinded copy and never sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub operator_id: OperatorId,
    pub privacy: Privacy,
    pub denomination: u64,
    pub owner: PublicKey,
    pub nonce: Serial,
    pub issuer_signature: IssuerSignature,
}

impl Genesis {
    /// The bytes the issuer signs: every field but the signature.
    pub fn body_bytes(&self) -> Vec<u8> {
        genesis_body(
            &self.operator_id,
            self.privacy,
            self.denomination,
            &self.owner,
            &self.nonce,
        )
    }

    pub fn asset_id(&self) -> Digest {
        crypto::hash_item(GENESIS_DOMAIN, self)
    }
}

fn genesis_body(
    operator_id: &OperatorId,
    privacy: Privacy,
    denomination: u64,
    owner: &PublicKey,
    nonce: &Serial,
) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.str(GENESIS_BODY_DOMAIN)
        .str(operator_id.as_str())
        .tag(privacy.tag())
        .u64(denomination)
        .item(owner)
        .item(nonce);
    enc.finish()
}

impl Canonical for Genesis {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.body_bytes());
        match &self.issuer_signature {
            IssuerSignature::Plain(s) => enc.tag(0).item(s),
            IssuerSignature::Blind(s) => enc.tag(1).item(s),
        };
    }
}

/// One change of ownership, signed by the previous owner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub asset_id: Digest,
    pub counter: u64,
    pub prev_digest: Digest,
    pub new_owner: PublicKey,
    pub signature: Signature,
}

impl StateUpdate {
    pub fn signing_bytes(
        asset_id: &Digest,
        counter: u64,
        prev_digest: &Digest,
        new_owner: &PublicKey,
    ) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.str(UPDATE_SIGN_DOMAIN)
            .item(asset_id)
            .u64(counter)
            .item(prev_digest)
            .item(new_owner);
        enc.finish()
    }

    pub fn new(
        asset_id: Digest,
        counter: u64,
        prev_digest: Digest,
        new_owner: PublicKey,
        signer: &KeyPair,
    ) -> Self {
        let signature = signer.sign(&Self::signing_bytes(
            &asset_id,
            counter,
            &prev_digest,
            &new_owner,
        ));
        Self {
            asset_id,
            counter,
            prev_digest,
            new_owner,
            signature,
        }
    }

    pub fn digest(&self) -> Digest {
        crypto::hash_item(UPDATE_DOMAIN, self)
    }
}

impl Canonical for StateUpdate {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.asset_id)
            .u64(self.counter)
            .item(&self.prev_digest)
            .item(&self.new_owner)
            .item(&self.signature);
    }
}

/// An asset carrying its own history and proof of provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsoAsset {
    pub asset_id: Digest,
    pub genesis: Genesis,
    pub updates: Vec<StateUpdate>,
    pub proof: ProofOfProvenance,
}

impl UsoAsset {
    /// Digest of the latest record: the asset id for a fresh asset.
    pub fn head_digest(&self) -> Digest {
        self.updates
            .last()
            .map(StateUpdate::digest)
            .unwrap_or(self.asset_id)
    }

    pub fn owner(&self) -> PublicKey {
        self.updates
            .last()
            .map(|u| u.new_owner)
            .unwrap_or(self.genesis.owner)
    }

    /// Digests the operator must have committed, genesis first.
    pub fn record_digests(&self) -> Vec<Digest> {
        std::iter::once(self.asset_id)
            .chain(self.updates.iter().map(StateUpdate::digest))
            .collect()
    }

    /// Replaces the proof with a fresh one from `operator`, covering every
    /// closed epoch since issuance.
    pub fn refresh_proof(&mut self, operator: &Operator) -> Result<()> {
        let from = self.proof.from_epoch;
        let Some(to) = operator.last_closed_epoch() else {
            return Err(Rejection::EpochOpen {
                epoch: operator.open_epoch(),
            });
        };
        self.proof = operator.prove_provenance(&self.asset_id, from, to)?;
        Ok(())
    }
}

/// Public keys a verifier needs to check genesis signatures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuerKeys {
    pub plain: PublicKey,
    pub blind: BTreeMap<u64, BlindPublicKey>,
}

impl IssuerKeys {
    pub fn verify_genesis(&self, genesis: &Genesis) -> bool {
        let body = genesis.body_bytes();
        match (&genesis.issuer_signature, genesis.privacy) {
            (IssuerSignature::Plain(sig), Privacy::Transparent) => {
                crypto::verify(&self.plain, &body, sig)
            }
            (IssuerSignature::Blind(sig), Privacy::Private) => self
                .blind
                .get(&genesis.denomination)
                .is_some_and(|k| crypto::verify_blind(k, &body, sig)),
            _ => false,
        }
    }
}

/// Asset issuer, separate from the operator.
#[derive(Debug, Clone)]
pub struct UsoIssuer {
    plain: KeyPair,
    blind: BTreeMap<u64, BlindSecretKey>,
    transcript: Vec<IssuanceRecord>,
    privacy: Privacy,
}

impl UsoIssuer {
    pub fn new<R: RngCore + CryptoRng>(
        rng: &mut R,
        privacy: Privacy,
        denominations: &BTreeSet<u64>,
    ) -> Self {
        Self::with_key_bits(rng, privacy, denominations, BLIND_KEY_BITS)
    }

    pub fn with_key_bits<R: RngCore + CryptoRng>(
        rng: &mut R,
        privacy: Privacy,
        denominations: &BTreeSet<u64>,
        key_bits: usize,
    ) -> Self {
        let plain = KeyPair::generate(rng);
        let blind = match privacy {
            Privacy::Private => denominations
                .iter()
                .map(|&d| (d, BlindSecretKey::generate(rng, key_bits)))
                .collect(),
            Privacy::Transparent => BTreeMap::new(),
        };
        Self {
            plain,
            blind,
            transcript: Vec::new(),
            privacy,
        }
    }

    pub fn privacy(&self) -> Privacy {
        self.privacy
    }

    pub fn keys(&self) -> IssuerKeys {
        IssuerKeys {
            plain: self.plain.public,
            blind: self
                .blind
                .iter()
                .map(|(d, k)| (*d, k.public().clone()))
                .collect(),
        }
    }

    pub fn transcript(&self) -> IssuanceTranscript {
        IssuanceTranscript {
            system: SystemLabel::uso(self.privacy),
            records: self.transcript.clone(),
        }
    }
}

/// Creates an asset owned by `owner` and submits its genesis digest to the
/// operator's open epoch.
pub fn issue_asset<R: RngCore + CryptoRng>(
    rng: &mut R,
    operator: &mut Operator,
    issuer: &mut UsoIssuer,
    denomination: u64,
    owner: PublicKey,
) -> Result<(UsoAsset, SubmissionReceipt)> {
    let privacy = issuer.privacy;
    let nonce = Serial::random(rng);
    let operator_id = operator.id().clone();
    let body = genesis_body(&operator_id, privacy, denomination, &owner, &nonce);

    let issuer_signature = match privacy {
        Privacy::Transparent => {
            if denomination == 0 {
                return Err(Rejection::BadDenomination(0));
            }
            IssuerSignature::Plain(issuer.plain.sign(&body))
        }
        Privacy::Private => {
            let key = issuer
                .blind
                .get(&denomination)
                .ok_or(Rejection::BadDenomination(denomination))?;
            // Holder side blinds; issuer side signs without seeing the body.
            let (blinded, unblinding) = crypto::blind(rng, key.public(), &body);
            let blind_signature = crypto::blind_sign(key, &blinded)
                .map_err(|e| Rejection::invalid(e.to_string()))?;
            let t = BlindSignatureTranscript {
                blinded_message: blinded,
                blind_signature: blind_signature.clone(),
                issuer_key: key.public().clone(),
            };
            issuer.transcript.push(IssuanceRecord::from_blind(&t));
            IssuerSignature::Blind(crypto::unblind(&blind_signature, &unblinding))
        }
    };

    let genesis = Genesis {
        operator_id: operator_id.clone(),
        privacy,
        denomination,
        owner,
        nonce,
        issuer_signature,
    };
    let asset_id = genesis.asset_id();
    if privacy == Privacy::Transparent {
        issuer.transcript.push(IssuanceRecord {
            visible: vec![HexBytes(asset_id.0.to_vec()), HexBytes(body)],
        });
    }
    let receipt = operator.submit(asset_id, asset_id)?;
    let asset = UsoAsset {
        asset_id,
        genesis,
        updates: Vec::new(),
        proof: ProofOfProvenance::empty(asset_id, operator_id, receipt.epoch),
    };
    Ok((asset, receipt))
}

/// Signs the next state update handing `asset` to `recipient` and submits
/// its digest to the operator. Returns the recipient's copy, whose proof
/// must be refreshed once the epoch closes.
///
/// The operator cannot check the encumbrance: an update signed with the
/// wrong key is accepted here and fails verification later.
pub fn transfer(
    asset: &UsoAsset,
    sender: &KeyPair,
    recipient: PublicKey,
    operator: &mut Operator,
) -> Result<(UsoAsset, SubmissionReceipt)> {
    let update = StateUpdate::new(
        asset.asset_id,
        asset.updates.len() as u64 + 1,
        asset.head_digest(),
        recipient,
        sender,
    );
    let receipt = operator.submit(asset.asset_id, update.digest())?;
    let mut next = asset.clone();
    next.updates.push(update);
    Ok((next, receipt))
}
