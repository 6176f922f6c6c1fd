//! Observer-visible transcripts consumed by the analysis harness.
//!
//! None of these types can hold a secret key, an unblinding factor or an
//! operator's private leaf contents: they carry only bytes that the named
//! party actually saw.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::BlindSignatureTranscript;
use crate::{Privacy, System};

/// Opaque bytes, hex-encoded in JSON.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HexBytes(pub Vec<u8>);

impl fmt::Debug for HexBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HexBytes({})", hex::encode(&self.0))
    }
}

impl Serialize for HexBytes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for HexBytes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(HexBytes).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemLabel {
    pub system: System,
    pub privacy: Privacy,
}

impl SystemLabel {
    pub fn utxo(privacy: Privacy) -> Self {
        Self {
            system: System::Utxo,
            privacy,
        }
    }

    pub fn uso(privacy: Privacy) -> Self {
        Self {
            system: System::Uso,
            privacy,
        }
    }
}

impl fmt::Display for SystemLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.system, self.privacy)
    }
}

/// The fields one issuance exposed to the issuer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuanceRecord {
    pub visible: Vec<HexBytes>,
}

impl IssuanceRecord {
    pub fn from_blind(t: &BlindSignatureTranscript) -> Self {
        Self {
            visible: vec![
                HexBytes(t.blinded_message.0.clone()),
                HexBytes(t.blind_signature.0.clone()),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuanceTranscript {
    pub system: SystemLabel,
    pub records: Vec<IssuanceRecord>,
}

/// One spend as an outside observer sees it: identifiers of the tokens it
/// consumed and of any tokens it visibly produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedSpend {
    pub consumed: Vec<HexBytes>,
    pub produced: Vec<HexBytes>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverTranscript {
    pub system: SystemLabel,
    pub spends: Vec<ObservedSpend>,
}
