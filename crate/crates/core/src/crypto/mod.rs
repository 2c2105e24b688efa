//! Cryptographic services consumed by every protocol role.
//!
//! The protocol is written against the [`CryptoSuite`] trait. [`StandardSuite`]
//! is the default instantiation (X25519 sealed boxes, Ed25519, ChaCha20-Poly1305,
//! SHA-256). [`UnauthenticatedSymmetric`] wraps a suite and strips integrity from
//! the symmetric layer; it exists only so tests can show that tamper detection
//! depends on authenticated encryption.
//!
//! Actors never call a suite directly. Each owns a [`CryptoContext`] that
//! carries its seeded randomness and counts every operation it performs.

mod context;
mod standard;
mod weak;

use std::fmt;

use rand::RngCore;
use thiserror::Error;

use crate::encoding::{EncodingError, Reader, Writer};

pub use context::{CryptoContext, NonceGenerator, OpCounts};
pub use standard::StandardSuite;
pub use weak::UnauthenticatedSymmetric;

/// Digest and symmetric key length in bytes.
pub const DIGEST_LEN: usize = 32;
/// Protocol nonce length in bytes.
pub const NONCE_LEN: usize = 16;
/// Largest plaintext accepted by [`CryptoSuite::seal_asym`].
pub const MAX_SEAL_PLAINTEXT: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("kdf input must be a non-empty list of non-empty parts")]
    InvalidKdfInput,
    #[error("plaintext of {0} bytes exceeds the sealing bound")]
    PlaintextTooLarge(usize),
    #[error("decryption failed")]
    DecryptionFailure,
    #[error("malformed key material")]
    InvalidKey,
}

/// A 32-byte symmetric key. Produced by [`CryptoSuite::kdf`] or by fresh
/// provisioning.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymmetricKey([u8; DIGEST_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricKey({}..)", &self.to_hex()[..8])
    }
}

/// A 16-byte protocol nonce (the r values exchanged between roles).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonce([u8; NONCE_LEN]);

impl Nonce {
    pub fn from_bytes(bytes: [u8; NONCE_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", hex::encode(self.0))
    }
}

/// Milliseconds since the simulation epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn ticks(self) -> u64 {
        self.0
    }

    pub fn plus(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }

    /// Absolute distance in milliseconds.
    pub fn distance(self, other: Timestamp) -> u64 {
        self.0.abs_diff(other.0)
    }
}

/// An asymmetric key pair. Contents are opaque to everything except the
/// suite that generated them.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public_key: Vec<u8>,
    pub private_key: Vec<u8>,
    pub role_label: String,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("role_label", &self.role_label)
            .field("public_key", &hex::encode(&self.public_key))
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn to_bytes(&self) -> Vec<u8> {
        Writer::new()
            .str(&self.role_label)
            .bytes(&self.public_key)
            .bytes(&self.private_key)
            .finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(data);
        let role_label = r.string()?;
        let public_key = r.vec()?;
        let private_key = r.vec()?;
        r.finish()?;
        Ok(Self {
            public_key,
            private_key,
            role_label,
        })
    }
}

/// Canonical KDF input: every part prefixed with its 4-byte big-endian length.
pub fn kdf_encoding(parts: &[&[u8]]) -> Result<Vec<u8>, CryptoError> {
    if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(CryptoError::InvalidKdfInput);
    }
    let mut w = Writer::new();
    for part in parts {
        w.bytes(part);
    }
    Ok(w.finish())
}

/// The primitive set every protocol role depends on.
pub trait CryptoSuite: Send + Sync {
    fn name(&self) -> &'static str;

    fn generate_keypair(&self, rng: &mut dyn RngCore, role_label: &str) -> KeyPair;

    /// Randomized public-key encryption.
    fn seal_asym(&self, rng: &mut dyn RngCore, public_key: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError>;

    fn unseal_asym(&self, private_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;

    fn sign(&self, private_key: &[u8], message: &[u8]) -> Vec<u8>;

    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool;

    fn enc_sym(&self, rng: &mut dyn RngCore, key: &SymmetricKey, plaintext: &[u8]) -> Vec<u8>;

    fn dec_sym(&self, key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;

    fn hash(&self, data: &[u8]) -> [u8; DIGEST_LEN];

    /// One-way key derivation over the canonical encoding of `parts`.
    fn kdf(&self, parts: &[&[u8]]) -> Result<SymmetricKey, CryptoError> {
        Ok(SymmetricKey(self.hash(&kdf_encoding(parts)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kdf_encoding_rejects_empty_input() {
        assert_eq!(kdf_encoding(&[]), Err(CryptoError::InvalidKdfInput));
        assert_eq!(kdf_encoding(&[b"a", b""]), Err(CryptoError::InvalidKdfInput));
    }

    #[test]
    fn keypair_bytes_round_trip() {
        let kp = KeyPair {
            public_key: vec![1, 2, 3],
            private_key: vec![4, 5],
            role_label: "HN".into(),
        };
        assert_eq!(KeyPair::from_bytes(&kp.to_bytes()).unwrap(), kp);
    }

    #[test]
    fn timestamp_distance_is_symmetric() {
        assert_eq!(Timestamp(10).distance(Timestamp(3)), 7);
        assert_eq!(Timestamp(3).distance(Timestamp(10)), 7);
    }
}
