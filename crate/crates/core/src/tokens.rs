//! Passport and Visa tokens and CA certificates.
//!
//! Both tokens are sign-then-seal envelopes: the issuer signs the canonical
//! body encoding with its own key and seals `body || signature` under its own
//! public key, so only the issuer can ever open the token again.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{CryptoContext, CryptoError, KeyPair, SymmetricKey, Timestamp};
use crate::encoding::{EncodingError, Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("token could not be decrypted")]
    DecryptionFailure,
    #[error("token signature does not verify")]
    BadSignature,
    #[error("token expired")]
    Expired,
    #[error("token body is malformed: {0}")]
    Malformed(#[from] EncodingError),
    #[error(transparent)]
    Crypto(CryptoError),
}

impl From<CryptoError> for TokenError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::DecryptionFailure => TokenError::DecryptionFailure,
            other => TokenError::Crypto(other),
        }
    }
}

/// Identification token contents, readable only by the home network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassportBody {
    pub id_mu: String,
    pub pass_no: u64,
    pub expiry: Timestamp,
    /// Passport type, MU type, name, date of birth, issue date and place,
    /// issuer id and name.
    pub data: BTreeMap<String, String>,
    /// The MU/HN master key.
    pub master_key: SymmetricKey,
}

impl PassportBody {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .str(&self.id_mu)
            .u64(self.pass_no)
            .u64(self.expiry.0)
            .map(&self.data)
            .bytes(self.master_key.as_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let body = Self {
            id_mu: r.string()?,
            pass_no: r.u64()?,
            expiry: Timestamp(r.u64()?),
            data: r.map()?,
            master_key: SymmetricKey::from_bytes(r.fixed()?),
        };
        r.finish()?;
        Ok(body)
    }
}

/// Authorization token contents, readable only by the issuing foreign network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisaBody {
    pub pass_no: u64,
    pub visa_no: u64,
    pub expiry: Timestamp,
    /// Visa type, number and duration of access, issuer, issue time,
    /// service type and name.
    pub data: BTreeMap<String, String>,
    /// The MU/FN master key.
    pub master_key: SymmetricKey,
}

impl VisaBody {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .u64(self.pass_no)
            .u64(self.visa_no)
            .u64(self.expiry.0)
            .map(&self.data)
            .bytes(self.master_key.as_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let body = Self {
            pass_no: r.u64()?,
            visa_no: r.u64()?,
            expiry: Timestamp(r.u64()?),
            data: r.map()?,
            master_key: SymmetricKey::from_bytes(r.fixed()?),
        };
        r.finish()?;
        Ok(body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SealedPassport(pub Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SealedVisa(pub Vec<u8>);

/// Signs `body` with `signing_key` and seals `body || signature` under
/// `seal_public_key`.
pub fn seal_signed(
    ctx: &mut CryptoContext,
    seal_public_key: &[u8],
    signing_key: &[u8],
    body: &[u8],
) -> Result<Vec<u8>, TokenError> {
    let signature = ctx.sign(signing_key, body);
    let inner = Writer::new().bytes(body).bytes(&signature).finish();
    Ok(ctx.seal_asym(seal_public_key, &inner)?)
}

/// Unseals a sign-then-seal envelope and verifies the signature, returning
/// the raw body bytes.
pub fn open_signed(ctx: &mut CryptoContext, keys: &KeyPair, sealed: &[u8]) -> Result<Vec<u8>, TokenError> {
    let inner = ctx.unseal_asym(&keys.private_key, sealed)?;
    let mut r = Reader::new(&inner);
    let body = r.vec()?;
    let signature = r.vec()?;
    r.finish()?;
    if !ctx.verify(&keys.public_key, &body, &signature) {
        return Err(TokenError::BadSignature);
    }
    Ok(body)
}

pub fn make_passport(
    ctx: &mut CryptoContext,
    hn_keys: &KeyPair,
    body: &PassportBody,
) -> Result<SealedPassport, TokenError> {
    seal_signed(ctx, &hn_keys.public_key, &hn_keys.private_key, &body.encode()).map(SealedPassport)
}

/// Recovers a passport body. Fails unless the HN signature verifies and the
/// passport has not expired at `now`.
pub fn open_passport(
    ctx: &mut CryptoContext,
    hn_keys: &KeyPair,
    sealed: &SealedPassport,
    now: Timestamp,
) -> Result<PassportBody, TokenError> {
    let body = PassportBody::decode(&open_signed(ctx, hn_keys, &sealed.0)?)?;
    if body.expiry < now {
        return Err(TokenError::Expired);
    }
    Ok(body)
}

pub fn make_visa(ctx: &mut CryptoContext, fn_keys: &KeyPair, body: &VisaBody) -> Result<SealedVisa, TokenError> {
    seal_signed(ctx, &fn_keys.public_key, &fn_keys.private_key, &body.encode()).map(SealedVisa)
}

pub fn open_visa(
    ctx: &mut CryptoContext,
    fn_keys: &KeyPair,
    sealed: &SealedVisa,
    now: Timestamp,
) -> Result<VisaBody, TokenError> {
    let body = VisaBody::decode(&open_signed(ctx, fn_keys, &sealed.0)?)?;
    if body.expiry < now {
        return Err(TokenError::Expired);
    }
    Ok(body)
}

/// What a CA vouches the certificate subject is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CertRole {
    NetworkProvider,
    IdentityProvider,
}

impl CertRole {
    pub fn code(self) -> u8 {
        match self {
            CertRole::NetworkProvider => 1,
            CertRole::IdentityProvider => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(CertRole::NetworkProvider),
            2 => Some(CertRole::IdentityProvider),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_id: String,
    pub subject_public_key: Vec<u8>,
    pub role: CertRole,
    pub expiry: Timestamp,
    pub ca_signature: Vec<u8>,
}

fn certificate_tbs(subject_id: &str, subject_public_key: &[u8], role: CertRole, expiry: Timestamp) -> Vec<u8> {
    Writer::new()
        .str(subject_id)
        .bytes(subject_public_key)
        .u8(role.code())
        .u64(expiry.0)
        .finish()
}

impl Certificate {
    /// The bytes covered by the CA signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        certificate_tbs(&self.subject_id, &self.subject_public_key, self.role, self.expiry)
    }

    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .str(&self.subject_id)
            .bytes(&self.subject_public_key)
            .u8(self.role.code())
            .u64(self.expiry.0)
            .bytes(&self.ca_signature)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let subject_id = r.string()?;
        let subject_public_key = r.vec()?;
        let code = r.u8()?;
        let role = CertRole::from_code(code).ok_or(EncodingError::BadBool(code))?;
        let expiry = Timestamp(r.u64()?);
        let ca_signature = r.vec()?;
        r.finish()?;
        Ok(Self {
            subject_id,
            subject_public_key,
            role,
            expiry,
            ca_signature,
        })
    }
}

pub fn issue_certificate(
    ctx: &mut CryptoContext,
    ca_keys: &KeyPair,
    subject_id: &str,
    subject_public_key: &[u8],
    role: CertRole,
    expiry: Timestamp,
) -> Certificate {
    let tbs = certificate_tbs(subject_id, subject_public_key, role, expiry);
    Certificate {
        subject_id: subject_id.to_string(),
        subject_public_key: subject_public_key.to_vec(),
        role,
        expiry,
        ca_signature: ctx.sign(&ca_keys.private_key, &tbs),
    }
}

/// Accepts iff the CA signature verifies, the certificate is unexpired at
/// `now`, and it carries `required_role`.
pub fn check_certificate(
    ctx: &mut CryptoContext,
    ca_public_key: &[u8],
    cert: &Certificate,
    required_role: CertRole,
    now: Timestamp,
) -> bool {
    cert.role == required_role
        && cert.expiry >= now
        && ctx.verify(ca_public_key, &cert.signed_bytes(), &cert.ca_signature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::StandardSuite;
    use std::sync::Arc;

    fn ctx() -> CryptoContext {
        CryptoContext::new(Arc::new(StandardSuite), 11)
    }

    fn passport_body(expiry: u64) -> PassportBody {
        let mut data = BTreeMap::new();
        data.insert("passport_type".into(), "roaming".into());
        data.insert("mu_name".into(), "Alice".into());
        data.insert("issuer_id".into(), "hn1".into());
        PassportBody {
            id_mu: "alice".into(),
            pass_no: 1,
            expiry: Timestamp(expiry),
            data,
            master_key: SymmetricKey::from_bytes([5; 32]),
        }
    }

    fn visa_body(expiry: u64) -> VisaBody {
        let mut data = BTreeMap::new();
        data.insert("visa_type".into(), "single".into());
        data.insert("times_of_access".into(), "10".into());
        VisaBody {
            pass_no: 1,
            visa_no: 7,
            expiry: Timestamp(expiry),
            data,
            master_key: SymmetricKey::from_bytes([6; 32]),
        }
    }

    #[test]
    fn passport_round_trip() {
        let mut ctx = ctx();
        let hn = ctx.generate_keypair("HN");
        let body = passport_body(1000);
        let sp = make_passport(&mut ctx, &hn, &body).unwrap();
        assert_eq!(open_passport(&mut ctx, &hn, &sp, Timestamp(0)).unwrap(), body);
        // expiry itself is still valid
        assert!(open_passport(&mut ctx, &hn, &sp, Timestamp(1000)).is_ok());
    }

    #[test]
    fn passport_under_other_hn_fails_to_decrypt() {
        let mut ctx = ctx();
        let hn = ctx.generate_keypair("HN");
        let other = ctx.generate_keypair("HN");
        let sp = make_passport(&mut ctx, &hn, &passport_body(1000)).unwrap();
        assert_eq!(
            open_passport(&mut ctx, &other, &sp, Timestamp(0)),
            Err(TokenError::DecryptionFailure)
        );
    }

    #[test]
    fn flipped_passport_byte_fails_to_decrypt() {
        let mut ctx = ctx();
        let hn = ctx.generate_keypair("HN");
        let mut sp = make_passport(&mut ctx, &hn, &passport_body(1000)).unwrap();
        let mid = sp.0.len() / 2;
        sp.0[mid] ^= 0x10;
        assert_eq!(
            open_passport(&mut ctx, &hn, &sp, Timestamp(0)),
            Err(TokenError::DecryptionFailure)
        );
    }

    #[test]
    fn expired_passport() {
        let mut ctx = ctx();
        let hn = ctx.generate_keypair("HN");
        // issued at 500 with expiry one tick earlier
        let sp = make_passport(&mut ctx, &hn, &passport_body(499)).unwrap();
        assert_eq!(
            open_passport(&mut ctx, &hn, &sp, Timestamp(500)),
            Err(TokenError::Expired)
        );
    }

    #[test]
    fn attacker_signed_passport_rejected() {
        let mut ctx = ctx();
        let hn = ctx.generate_keypair("HN");
        let attacker = ctx.generate_keypair("ATTACKER");
        let body = passport_body(1000);
        let forged = seal_signed(&mut ctx, &hn.public_key, &attacker.private_key, &body.encode()).unwrap();
        assert_eq!(
            open_passport(&mut ctx, &hn, &SealedPassport(forged), Timestamp(0)),
            Err(TokenError::BadSignature)
        );
    }

    #[test]
    fn visa_round_trip_forgery_and_expiry() {
        let mut ctx = ctx();
        let fnk = ctx.generate_keypair("FN");
        let attacker = ctx.generate_keypair("ATTACKER");
        let body = visa_body(2000);
        let sv = make_visa(&mut ctx, &fnk, &body).unwrap();
        assert_eq!(open_visa(&mut ctx, &fnk, &sv, Timestamp(10)).unwrap(), body);

        let forged = seal_signed(&mut ctx, &fnk.public_key, &attacker.private_key, &body.encode()).unwrap();
        assert_eq!(
            open_visa(&mut ctx, &fnk, &SealedVisa(forged), Timestamp(10)),
            Err(TokenError::BadSignature)
        );
        assert_eq!(
            open_visa(&mut ctx, &fnk, &sv, Timestamp(2001)),
            Err(TokenError::Expired)
        );
    }

    #[test]
    fn certificate_role_and_expiry() {
        let mut ctx = ctx();
        let ca = ctx.generate_keypair("CA");
        let fnk = ctx.generate_keypair("FN");
        let cert = issue_certificate(
            &mut ctx,
            &ca,
            "fn1",
            &fnk.public_key,
            CertRole::NetworkProvider,
            Timestamp(100),
        );
        assert!(check_certificate(
            &mut ctx,
            &ca.public_key,
            &cert,
            CertRole::NetworkProvider,
            Timestamp(0)
        ));
        assert!(!check_certificate(
            &mut ctx,
            &ca.public_key,
            &cert,
            CertRole::IdentityProvider,
            Timestamp(0)
        ));
        assert!(!check_certificate(
            &mut ctx,
            &ca.public_key,
            &cert,
            CertRole::NetworkProvider,
            Timestamp(101)
        ));

        let mut renamed = cert.clone();
        renamed.subject_id = "fn2".into();
        assert!(!check_certificate(
            &mut ctx,
            &ca.public_key,
            &renamed,
            CertRole::NetworkProvider,
            Timestamp(0)
        ));
        assert_eq!(Certificate::decode(&cert.encode()).unwrap(), cert);
    }

    #[test]
    fn no_key_leaks_without_private_key() {
        // Two bodies differing only in the master key: sealed lengths are
        // equal and neither ciphertext contains the key bytes.
        let mut ctx = ctx();
        let hn = ctx.generate_keypair("HN");
        let mut a = passport_body(1000);
        a.master_key = SymmetricKey::from_bytes([0xAA; 32]);
        let mut b = a.clone();
        b.master_key = SymmetricKey::from_bytes([0x55; 32]);
        let sa = make_passport(&mut ctx, &hn, &a).unwrap();
        let sb = make_passport(&mut ctx, &hn, &b).unwrap();
        assert_eq!(sa.0.len(), sb.0.len());
        for sealed in [&sa.0, &sb.0] {
            assert!(!sealed.windows(32).any(|w| w == a.master_key.as_bytes()));
            assert!(!sealed.windows(32).any(|w| w == b.master_key.as_bytes()));
        }
    }
}
