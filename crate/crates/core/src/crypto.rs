//! Hashing, ordinary signatures and blind signatures.
//!
//! * Hash: SHA-256.
//! * Signatures: Ed25519, raw 32-byte keys and 64-byte signatures.
//! * Blind signatures: RSA full-domain-hash blind signatures following the
//!   blind / blind-sign / finalize / verify flow of RFC 9474. Keys, blinded
//!   messages and signatures are raw big-endian byte strings of the modulus
//!   length.
//!
//! All randomness comes from a caller-supplied RNG so that scenarios are
//! reproducible from a seed.

use std::fmt;

use ed25519_dalek::{Signer, Verifier};
use num_bigint_dig::{BigUint, ModInverse, RandBigInt, RandPrime};
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::encoding::{Canonical, Encoder};

/// Default RSA modulus size for blind issuance keys.
pub const BLIND_KEY_BITS: usize = 1024;

const BLIND_PUBLIC_EXPONENT: u32 = 65_537;
const FDH_TAG: &[u8] = b"tokenlab/fdh/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("blinded message is malformed for this issuer key")]
    MalformedBlindedMessage,
    #[error("invalid hex encoding: {0}")]
    Hex(String),
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
}

macro_rules! hex_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.as_bytes()))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $ty::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.as_bytes()))
            }
        }
    };
}

macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $ty:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $ty(pub [u8; $len]);

        impl $ty {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| CryptoError::Length {
                    expected: $len,
                    got: bytes.len(),
                })?;
                Ok(Self(arr))
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                let raw = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
                Self::from_slice(&raw)
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let h = hex::encode(self.0);
                write!(f, "{}({}..)", stringify!($ty), &h[..16])
            }
        }

        impl Canonical for $ty {
            fn encode(&self, enc: &mut Encoder) {
                enc.bytes(&self.0);
            }
        }

        hex_serde!($ty);
    };
}

macro_rules! var_bytes {
    ($(#[$meta:meta])* $ty:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $ty(pub Vec<u8>);

        impl $ty {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                hex::decode(s).map(Self).map_err(|e| CryptoError::Hex(e.to_string()))
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({} bytes)", stringify!($ty), self.0.len())
            }
        }

        impl Canonical for $ty {
            fn encode(&self, enc: &mut Encoder) {
                enc.bytes(&self.0);
            }
        }

        hex_serde!($ty);
    };
}

fixed_bytes!(
    /// A 32-byte SHA-256 digest.
    Digest,
    32
);
fixed_bytes!(
    /// Ed25519 verification key.
    PublicKey,
    32
);
fixed_bytes!(
    /// 32 random bytes naming a bearer token or asset.
    Serial,
    32
);
fixed_bytes!(
    /// Ed25519 signature.
    Signature,
    64
);
var_bytes!(
    /// A message blinded for an issuer; modulus-length bytes.
    BlindedMessage
);
var_bytes!(
    /// The issuer's signature over a blinded message.
    BlindSignature
);
var_bytes!(
    /// An unblinded RSA signature, verifiable with [`verify_blind`].
    BlindSigned
);

impl Serial {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Serial(b)
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of a domain tag followed by the canonical encoding of `item`.
pub fn hash_item<T: Canonical + ?Sized>(domain: &str, item: &T) -> Digest {
    let mut enc = Encoder::new();
    enc.str(domain).item(item);
    hash(&enc.finish())
}

/// Ed25519 signing key seed. Never serialised.
#[derive(Clone)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        let sk = ed25519_dalek::SigningKey::from_bytes(&seed);
        KeyPair {
            public: PublicKey(sk.verifying_key().to_bytes()),
            secret: SecretKey(seed),
        }
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(&self.secret, message)
    }
}

pub fn sign(secret: &SecretKey, message: &[u8]) -> Signature {
    let sk = ed25519_dalek::SigningKey::from_bytes(&secret.0);
    Signature(sk.sign(message).to_bytes())
}

/// Malformed keys verify nothing.
pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    vk.verify(message, &sig).is_ok()
}

/// Issuer-side RSA key for blind signatures.
#[derive(Clone)]
pub struct BlindSecretKey {
    public: BlindPublicKey,
    d: BigUint,
}

impl fmt::Debug for BlindSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlindSecretKey")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// RSA modulus, big-endian; the public exponent is fixed at 65537.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlindPublicKey {
    modulus: Vec<u8>,
}

impl BlindPublicKey {
    pub fn from_modulus(modulus: Vec<u8>) -> Self {
        Self { modulus }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.modulus
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        hex::decode(s)
            .map(Self::from_modulus)
            .map_err(|e| CryptoError::Hex(e.to_string()))
    }

    /// Modulus length in bytes; every blinded value and signature has this length.
    pub fn len(&self) -> usize {
        self.modulus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modulus.is_empty()
    }

    fn n(&self) -> BigUint {
        BigUint::from_bytes_be(&self.modulus)
    }
}

impl fmt::Debug for BlindPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlindPublicKey({} bits)", self.modulus.len() * 8)
    }
}

impl Canonical for BlindPublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.modulus);
    }
}

hex_serde!(BlindPublicKey);

impl BlindSecretKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R, bits: usize) -> Self {
        assert!(bits >= 512 && bits.is_multiple_of(16), "unsupported modulus size");
        let e = BigUint::from(BLIND_PUBLIC_EXPONENT);
        loop {
            let p: BigUint = rng.gen_prime(bits / 2);
            let q: BigUint = rng.gen_prime(bits / 2);
            if p == q {
                continue;
            }
            let n = &p * &q;
            if n.bits() != bits {
                continue;
            }
            let phi = (&p - 1u32) * (&q - 1u32);
            let Some(d) = e.clone().mod_inverse(&phi).and_then(|d| d.to_biguint()) else {
                continue;
            };
            return BlindSecretKey {
                public: BlindPublicKey { modulus: to_fixed(&n, bits / 8) },
                d,
            };
        }
    }

    pub fn public(&self) -> &BlindPublicKey {
        &self.public
    }
}

/// Client-side secret needed to unblind the issuer's answer.
#[derive(Clone)]
pub struct UnblindingState {
    issuer: BlindPublicKey,
    r_inv: BigUint,
}

impl fmt::Debug for UnblindingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("UnblindingState(..)")
    }
}

/// Everything the issuer observes during one blind issuance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindSignatureTranscript {
    pub blinded_message: BlindedMessage,
    pub blind_signature: BlindSignature,
    pub issuer_key: BlindPublicKey,
}

fn to_fixed(v: &BigUint, len: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    let mut out = vec![0u8; len.saturating_sub(raw.len())];
    out.extend_from_slice(&raw);
    out
}

/// Full-domain hash of `message` into `[0, 2^(8k-8))`, which lies below any
/// k-byte modulus with its top bit set.
fn encode_message(key: &BlindPublicKey, message: &[u8]) -> BigUint {
    let k = key.len();
    let mut out = Vec::with_capacity(k + 32);
    let mut counter: u32 = 0;
    while out.len() < k {
        let mut h = Sha256::new();
        h.update(FDH_TAG);
        h.update(counter.to_be_bytes());
        h.update(&key.modulus);
        h.update(message);
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(k);
    out[0] = 0;
    BigUint::from_bytes_be(&out)
}

/// Blinds `message` for `issuer` with fresh randomness from `rng`.
pub fn blind<R: RngCore + CryptoRng>(
    rng: &mut R,
    issuer: &BlindPublicKey,
    message: &[u8],
) -> (BlindedMessage, UnblindingState) {
    let n = issuer.n();
    let e = BigUint::from(BLIND_PUBLIC_EXPONENT);
    let m = encode_message(issuer, message);
    let two = BigUint::from(2u32);
    loop {
        let r = rng.gen_biguint_range(&two, &n);
        let Some(r_inv) = r.clone().mod_inverse(&n).and_then(|v| v.to_biguint()) else {
            continue;
        };
        let blinded = (&m * r.modpow(&e, &n)) % &n;
        return (
            BlindedMessage(to_fixed(&blinded, issuer.len())),
            UnblindingState {
                issuer: issuer.clone(),
                r_inv,
            },
        );
    }
}

pub fn blind_sign(
    key: &BlindSecretKey,
    blinded: &BlindedMessage,
) -> Result<BlindSignature, CryptoError> {
    let n = key.public.n();
    if blinded.0.len() != key.public.len() {
        return Err(CryptoError::MalformedBlindedMessage);
    }
    let m = BigUint::from_bytes_be(&blinded.0);
    if m.is_zero() || m >= n {
        return Err(CryptoError::MalformedBlindedMessage);
    }
    let s = m.modpow(&key.d, &n);
    Ok(BlindSignature(to_fixed(&s, key.public.len())))
}

/// A state from a different blinding yields a signature that fails verification.
pub fn unblind(signature: &BlindSignature, state: &UnblindingState) -> BlindSigned {
    let n = state.issuer.n();
    let s = BigUint::from_bytes_be(&signature.0);
    let unblinded = (s * &state.r_inv) % &n;
    BlindSigned(to_fixed(&unblinded, state.issuer.len()))
}

pub fn verify_blind(issuer: &BlindPublicKey, message: &[u8], signature: &BlindSigned) -> bool {
    if issuer.is_empty() || signature.0.len() != issuer.len() {
        return false;
    }
    let n = issuer.n();
    if n <= BigUint::one() {
        return false;
    }
    let s = BigUint::from_bytes_be(&signature.0);
    if s >= n {
        return false;
    }
    s.modpow(&BigUint::from(BLIND_PUBLIC_EXPONENT), &n) == encode_message(issuer, message)
}
