//! Dolev-Yao style capabilities beyond what the bus offers directly:
//! forging tokens with the attacker's own keys and re-labelling borrowed
//! signatures.

use std::collections::BTreeMap;

use crate::crypto::{CryptoContext, KeyPair, SymmetricKey, Timestamp};
use crate::encoding::Writer;
use crate::tokens::{PassportBody, VisaBody};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Passport,
    Visa,
}

/// What a forged token claims about its holder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenClaim {
    pub id_mu: String,
    pub pass_no: u64,
    pub visa_no: u64,
    pub expiry: Timestamp,
    pub master_key: SymmetricKey,
}

fn body_bytes(kind: TokenKind, claim: &TokenClaim) -> Vec<u8> {
    match kind {
        TokenKind::Passport => PassportBody {
            id_mu: claim.id_mu.clone(),
            pass_no: claim.pass_no,
            expiry: claim.expiry,
            data: BTreeMap::from([("issuer_id".to_string(), "forged".to_string())]),
            master_key: claim.master_key.clone(),
        }
        .encode(),
        TokenKind::Visa => VisaBody {
            pass_no: claim.pass_no,
            visa_no: claim.visa_no,
            expiry: claim.expiry,
            data: BTreeMap::from([("issuer_id".to_string(), "forged".to_string())]),
            master_key: claim.master_key.clone(),
        }
        .encode(),
    }
}

fn seal(ctx: &mut CryptoContext, victim_public_key: &[u8], body: &[u8], signature: &[u8]) -> Vec<u8> {
    let inner = Writer::new().bytes(body).bytes(signature).finish();
    ctx.seal_asym(victim_public_key, &inner).unwrap_or_default()
}

/// A well-formed token signed with the attacker's key and sealed under the
/// victim issuer's public key, exactly as the issuer would build it.
pub fn forge_token(
    ctx: &mut CryptoContext,
    kind: TokenKind,
    attacker: &KeyPair,
    victim_public_key: &[u8],
    claim: &TokenClaim,
) -> Vec<u8> {
    let body = body_bytes(kind, claim);
    let signature = ctx.sign(&attacker.private_key, &body);
    seal(ctx, victim_public_key, &body, &signature)
}

/// A token whose signature was produced by someone else over other bytes,
/// for example a CA signature lifted from a public certificate.
pub fn relabel_token(
    ctx: &mut CryptoContext,
    kind: TokenKind,
    victim_public_key: &[u8],
    claim: &TokenClaim,
    borrowed_signature: &[u8],
) -> Vec<u8> {
    let body = body_bytes(kind, claim);
    seal(ctx, victim_public_key, &body, borrowed_signature)
}

/// Copy of `bytes` with every bit of one byte flipped.
pub fn flip_byte(bytes: &[u8], pos: usize) -> Vec<u8> {
    let mut out = bytes.to_vec();
    if let Some(b) = out.get_mut(pos) {
        *b ^= 0xff;
    }
    out
}
