use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::ChaCha20Poly1305;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::RngCore;
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use super::{kdf_encoding, CryptoError, CryptoSuite, KeyPair, SymmetricKey, DIGEST_LEN, MAX_SEAL_PLAINTEXT};

const AEAD_NONCE_LEN: usize = 12;
const HALF: usize = 32;

/// X25519 sealed boxes with ChaCha20-Poly1305, Ed25519 signatures, SHA-256.
///
/// A key pair's public half is `x25519_public || ed25519_verifying_key`; the
/// private half is `x25519_secret || ed25519_seed`.
#[derive(Debug, Default, Clone, Copy)]
pub struct StandardSuite;

fn split(key: &[u8]) -> Result<([u8; HALF], [u8; HALF]), CryptoError> {
    if key.len() != 2 * HALF {
        return Err(CryptoError::InvalidKey);
    }
    let mut a = [0u8; HALF];
    let mut b = [0u8; HALF];
    a.copy_from_slice(&key[..HALF]);
    b.copy_from_slice(&key[HALF..]);
    Ok((a, b))
}

fn box_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let input = kdf_encoding(&[b"pvkit-seal", shared, ephemeral, recipient]).expect("non-empty parts");
    Sha256::digest(input).into()
}

pub(super) fn aead_seal(rng: &mut dyn RngCore, key: &[u8; 32], plaintext: &[u8]) -> Vec<u8> {
    let mut nonce = [0u8; AEAD_NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(key.into());
    let body = cipher
        .encrypt((&nonce).into(), plaintext)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(AEAD_NONCE_LEN + body.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&body);
    out
}

pub(super) fn aead_open(key: &[u8; 32], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < AEAD_NONCE_LEN {
        return Err(CryptoError::DecryptionFailure);
    }
    let (nonce, body) = ciphertext.split_at(AEAD_NONCE_LEN);
    ChaCha20Poly1305::new(key.into())
        .decrypt(nonce.into(), body)
        .map_err(|_| CryptoError::DecryptionFailure)
}

impl CryptoSuite for StandardSuite {
    fn name(&self) -> &'static str {
        "x25519-chacha20poly1305-ed25519-sha256"
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore, role_label: &str) -> KeyPair {
        let mut dh = [0u8; HALF];
        let mut seed = [0u8; HALF];
        rng.fill_bytes(&mut dh);
        rng.fill_bytes(&mut seed);
        let dh_secret = StaticSecret::from(dh);
        let signing = SigningKey::from_bytes(&seed);

        let mut public_key = PublicKey::from(&dh_secret).as_bytes().to_vec();
        public_key.extend_from_slice(signing.verifying_key().as_bytes());
        let mut private_key = dh_secret.to_bytes().to_vec();
        private_key.extend_from_slice(&seed);
        KeyPair {
            public_key,
            private_key,
            role_label: role_label.to_string(),
        }
    }

    fn seal_asym(&self, rng: &mut dyn RngCore, public_key: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if plaintext.len() > MAX_SEAL_PLAINTEXT {
            return Err(CryptoError::PlaintextTooLarge(plaintext.len()));
        }
        let (recipient, _) = split(public_key)?;
        let mut eph = [0u8; HALF];
        rng.fill_bytes(&mut eph);
        let eph_secret = StaticSecret::from(eph);
        let eph_public = PublicKey::from(&eph_secret);
        let shared = eph_secret.diffie_hellman(&PublicKey::from(recipient));
        if !shared.was_contributory() {
            return Err(CryptoError::InvalidKey);
        }
        let key = box_key(shared.as_bytes(), eph_public.as_bytes(), &recipient);
        let mut out = eph_public.as_bytes().to_vec();
        out.extend(aead_seal(rng, &key, plaintext));
        Ok(out)
    }

    fn unseal_asym(&self, private_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let (secret, _) = split(private_key)?;
        if ciphertext.len() < HALF {
            return Err(CryptoError::DecryptionFailure);
        }
        let (eph, body) = ciphertext.split_at(HALF);
        let eph: [u8; HALF] = eph.try_into().expect("split at HALF");
        let secret = StaticSecret::from(secret);
        let recipient = PublicKey::from(&secret);
        let shared = secret.diffie_hellman(&PublicKey::from(eph));
        if !shared.was_contributory() {
            return Err(CryptoError::DecryptionFailure);
        }
        let key = box_key(shared.as_bytes(), &eph, recipient.as_bytes());
        aead_open(&key, body)
    }

    fn sign(&self, private_key: &[u8], message: &[u8]) -> Vec<u8> {
        let (_, seed) = split(private_key).expect("private key produced by generate_keypair");
        SigningKey::from_bytes(&seed).sign(message).to_bytes().to_vec()
    }

    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let Ok((_, vk)) = split(public_key) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(&vk) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        vk.verify_strict(message, &sig).is_ok()
    }

    fn enc_sym(&self, rng: &mut dyn RngCore, key: &SymmetricKey, plaintext: &[u8]) -> Vec<u8> {
        aead_seal(rng, key.as_bytes(), plaintext)
    }

    fn dec_sym(&self, key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        aead_open(key.as_bytes(), ciphertext)
    }

    fn hash(&self, data: &[u8]) -> [u8; DIGEST_LEN] {
        Sha256::digest(data).into()
    }
}
