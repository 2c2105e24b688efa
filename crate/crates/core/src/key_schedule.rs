//! The session key chain. Every derivation is a single `kdf` call over the
//! listed parts; integers enter as 8-byte big-endian values, identities as
//! UTF-8, nonces and keys as raw bytes.

use crate::crypto::{CryptoContext, CryptoError, Nonce, SymmetricKey};

/// K_MU-HN from the smart card id and the holder's biometric sample.
pub fn master_mu_hn(ctx: &mut CryptoContext, sc_id: &[u8], biometric: &[u8]) -> Result<SymmetricKey, CryptoError> {
    ctx.kdf(&[sc_id, biometric])
}

/// SK_MU-HN = h(K_MU-HN, id_MU, id_FN).
pub fn session_mu_hn(
    ctx: &mut CryptoContext,
    master: &SymmetricKey,
    id_mu: &str,
    id_fn: &str,
) -> Result<SymmetricKey, CryptoError> {
    ctx.kdf(&[master.as_bytes(), id_mu.as_bytes(), id_fn.as_bytes()])
}

/// SK_MU-FN = h(Pass_No, id_FN, r_MU, r_FN, r″_MU, r″_FN).
pub fn session_mu_fn(
    ctx: &mut CryptoContext,
    pass_no: u64,
    id_fn: &str,
    r_mu: &Nonce,
    r_fn: &Nonce,
    r2_mu: &Nonce,
    r2_fn: &Nonce,
) -> Result<SymmetricKey, CryptoError> {
    ctx.kdf(&[
        &pass_no.to_be_bytes(),
        id_fn.as_bytes(),
        r_mu.as_bytes(),
        r_fn.as_bytes(),
        r2_mu.as_bytes(),
        r2_fn.as_bytes(),
    ])
}

/// SK′ = h(chain key, Visa_No, Pass_No).
pub fn service_first(
    ctx: &mut CryptoContext,
    chain_key: &SymmetricKey,
    visa_no: u64,
    pass_no: u64,
) -> Result<SymmetricKey, CryptoError> {
    ctx.kdf(&[chain_key.as_bytes(), &visa_no.to_be_bytes(), &pass_no.to_be_bytes()])
}

/// SK″ = h(SK′, K_MU-FN, r′_MU).
pub fn service_second(
    ctx: &mut CryptoContext,
    first: &SymmetricKey,
    visa_master: &SymmetricKey,
    r1_mu: &Nonce,
) -> Result<SymmetricKey, CryptoError> {
    ctx.kdf(&[first.as_bytes(), visa_master.as_bytes(), r1_mu.as_bytes()])
}

/// SK‴ = h(SK″, SK′, r′_FN).
pub fn service_third(
    ctx: &mut CryptoContext,
    second: &SymmetricKey,
    first: &SymmetricKey,
    r1_fn: &Nonce,
) -> Result<SymmetricKey, CryptoError> {
    ctx.kdf(&[second.as_bytes(), first.as_bytes(), r1_fn.as_bytes()])
}
