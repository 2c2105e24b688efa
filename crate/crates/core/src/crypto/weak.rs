use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;
use rand::RngCore;

use super::{CryptoError, CryptoSuite, KeyPair, SymmetricKey, DIGEST_LEN};

const IV_LEN: usize = 12;

/// Replaces the symmetric layer of `S` with bare ChaCha20 (no tag).
///
/// Decryption under a wrong key or over modified bytes "succeeds" and yields
/// garbage. Test-only negative control for the tamper-detection claims.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnauthenticatedSymmetric<S>(pub S);

fn keystream_xor(key: &SymmetricKey, iv: &[u8; IV_LEN], data: &mut [u8]) {
    let mut cipher = ChaCha20::new(key.as_bytes().into(), iv.into());
    cipher.apply_keystream(data);
}

impl<S: CryptoSuite> CryptoSuite for UnauthenticatedSymmetric<S> {
    fn name(&self) -> &'static str {
        "unauthenticated-symmetric"
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore, role_label: &str) -> KeyPair {
        self.0.generate_keypair(rng, role_label)
    }

    fn seal_asym(&self, rng: &mut dyn RngCore, public_key: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.0.seal_asym(rng, public_key, plaintext)
    }

    fn unseal_asym(&self, private_key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.0.unseal_asym(private_key, ciphertext)
    }

    fn sign(&self, private_key: &[u8], message: &[u8]) -> Vec<u8> {
        self.0.sign(private_key, message)
    }

    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        self.0.verify(public_key, message, signature)
    }

    fn enc_sym(&self, rng: &mut dyn RngCore, key: &SymmetricKey, plaintext: &[u8]) -> Vec<u8> {
        let mut iv = [0u8; IV_LEN];
        rng.fill_bytes(&mut iv);
        let mut body = plaintext.to_vec();
        keystream_xor(key, &iv, &mut body);
        let mut out = iv.to_vec();
        out.extend(body);
        out
    }

    fn dec_sym(&self, key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if ciphertext.len() < IV_LEN {
            return Err(CryptoError::DecryptionFailure);
        }
        let (iv, body) = ciphertext.split_at(IV_LEN);
        let iv: [u8; IV_LEN] = iv.try_into().expect("split at IV_LEN");
        let mut out = body.to_vec();
        keystream_xor(key, &iv, &mut out);
        Ok(out)
    }

    fn hash(&self, data: &[u8]) -> [u8; DIGEST_LEN] {
        self.0.hash(data)
    }
}
