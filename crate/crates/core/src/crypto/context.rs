use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{CryptoError, CryptoSuite, KeyPair, Nonce, SymmetricKey, NONCE_LEN};

/// Per-actor operation counters.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    pub seal_asym: u64,
    pub unseal_asym: u64,
    pub sign: u64,
    pub verify: u64,
    pub enc_sym: u64,
    pub dec_sym: u64,
    pub kdf: u64,
    pub keygen: u64,
}

impl OpCounts {
    /// Public-key operations of any kind.
    pub fn asymmetric(&self) -> u64 {
        self.seal_asym + self.unseal_asym + self.sign + self.verify + self.keygen
    }

    pub fn symmetric(&self) -> u64 {
        self.enc_sym + self.dec_sym + self.kdf
    }
}

/// Seeded generator of protocol nonces.
pub struct NonceGenerator {
    rng: ChaCha20Rng,
}

impl NonceGenerator {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn next_nonce(&mut self) -> Nonce {
        let mut bytes = [0u8; NONCE_LEN];
        self.rng.fill_bytes(&mut bytes);
        Nonce::from_bytes(bytes)
    }
}

/// An actor's handle on the crypto suite.
///
/// Holds the actor's seeded randomness, counts every operation performed
/// through it, and remembers which symmetric keys were used to encrypt or
/// decrypt traffic.
pub struct CryptoContext {
    suite: Arc<dyn CryptoSuite>,
    rng: ChaCha20Rng,
    nonces: NonceGenerator,
    counts: OpCounts,
    traffic_keys: BTreeSet<SymmetricKey>,
}

impl fmt::Debug for CryptoContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CryptoContext")
            .field("suite", &self.suite.name())
            .field("counts", &self.counts)
            .finish_non_exhaustive()
    }
}

impl CryptoContext {
    pub fn new(suite: Arc<dyn CryptoSuite>, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let nonces = NonceGenerator::from_seed(rng.next_u64());
        Self {
            suite,
            rng,
            nonces,
            counts: OpCounts::default(),
            traffic_keys: BTreeSet::new(),
        }
    }

    pub fn suite(&self) -> &Arc<dyn CryptoSuite> {
        &self.suite
    }

    pub fn counts(&self) -> OpCounts {
        self.counts
    }

    /// Every symmetric key this context has used with `enc_sym`/`dec_sym`.
    pub fn traffic_keys(&self) -> &BTreeSet<SymmetricKey> {
        &self.traffic_keys
    }

    pub fn generate_keypair(&mut self, role_label: &str) -> KeyPair {
        self.counts.keygen += 1;
        self.suite.generate_keypair(&mut self.rng, role_label)
    }

    /// A fresh random symmetric key (master-key provisioning).
    pub fn random_key(&mut self) -> SymmetricKey {
        let mut bytes = [0u8; 32];
        self.rng.fill_bytes(&mut bytes);
        SymmetricKey::from_bytes(bytes)
    }

    pub fn fresh_nonce(&mut self) -> Nonce {
        self.nonces.next_nonce()
    }

    pub fn random_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn seal_asym(&mut self, public_key: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.counts.seal_asym += 1;
        self.suite.seal_asym(&mut self.rng, public_key, plaintext)
    }

    pub fn unseal_asym(&mut self, private_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.counts.unseal_asym += 1;
        self.suite.unseal_asym(private_key, ciphertext)
    }

    pub fn sign(&mut self, private_key: &[u8], message: &[u8]) -> Vec<u8> {
        self.counts.sign += 1;
        self.suite.sign(private_key, message)
    }

    pub fn verify(&mut self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        self.counts.verify += 1;
        self.suite.verify(public_key, message, signature)
    }

    pub fn enc_sym(&mut self, key: &SymmetricKey, plaintext: &[u8]) -> Vec<u8> {
        self.counts.enc_sym += 1;
        self.traffic_keys.insert(key.clone());
        self.suite.enc_sym(&mut self.rng, key, plaintext)
    }

    pub fn dec_sym(&mut self, key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.counts.dec_sym += 1;
        self.traffic_keys.insert(key.clone());
        self.suite.dec_sym(key, ciphertext)
    }

    pub fn kdf(&mut self, parts: &[&[u8]]) -> Result<SymmetricKey, CryptoError> {
        self.counts.kdf += 1;
        self.suite.kdf(parts)
    }
}
