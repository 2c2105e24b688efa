//! Plaintexts carried inside the encrypted and sealed message fields.

use crate::crypto::{Nonce, SymmetricKey, Timestamp};
use crate::encoding::{EncodingError, Reader, Writer};

/// The revocation literal carried in both revocation messages.
pub const REVOKE_LITERAL: &[u8] = b"RevOke";

fn nonce(r: &mut Reader<'_>) -> Result<Nonce, EncodingError> {
    Ok(Nonce::from_bytes(r.fixed()?))
}

fn literal(r: &mut Reader<'_>) -> Result<(), EncodingError> {
    let lit = r.bytes()?;
    if lit != REVOKE_LITERAL {
        return Err(EncodingError::BadFieldLength {
            expected: REVOKE_LITERAL.len(),
            found: lit.len(),
        });
    }
    Ok(())
}

/// `(id_FN, r_MU, T_MU)`, encrypted by the MU for its HN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HnChallenge {
    pub id_fn: String,
    pub r_mu: Nonce,
    pub t_mu: Timestamp,
}

impl HnChallenge {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .str(&self.id_fn)
            .bytes(self.r_mu.as_bytes())
            .u64(self.t_mu.0)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            id_fn: r.string()?,
            r_mu: nonce(&mut r)?,
            t_mu: Timestamp(r.u64()?),
        };
        r.finish()?;
        Ok(out)
    }
}

/// `(Pass_No, valid_MU, r_MU, r_FN)` plus the HN signature over those fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FnVerdict {
    pub pass_no: u64,
    pub valid_mu: bool,
    pub r_mu: Nonce,
    pub r_fn: Nonce,
    pub signature: Vec<u8>,
}

impl FnVerdict {
    pub fn signed_bytes(pass_no: u64, valid_mu: bool, r_mu: &Nonce, r_fn: &Nonce) -> Vec<u8> {
        Writer::new()
            .u64(pass_no)
            .bool(valid_mu)
            .bytes(r_mu.as_bytes())
            .bytes(r_fn.as_bytes())
            .finish()
    }

    pub fn to_be_signed(&self) -> Vec<u8> {
        Self::signed_bytes(self.pass_no, self.valid_mu, &self.r_mu, &self.r_fn)
    }

    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .u64(self.pass_no)
            .bool(self.valid_mu)
            .bytes(self.r_mu.as_bytes())
            .bytes(self.r_fn.as_bytes())
            .bytes(&self.signature)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            pass_no: r.u64()?,
            valid_mu: r.bool()?,
            r_mu: nonce(&mut r)?,
            r_fn: nonce(&mut r)?,
            signature: r.vec()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// `(id_FN, valid_FN, r_FN, r_MU, T_HN)`, encrypted by the HN for the MU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuVerdict {
    pub id_fn: String,
    pub valid_fn: bool,
    pub r_fn: Nonce,
    pub r_mu: Nonce,
    pub t_hn: Timestamp,
}

impl MuVerdict {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .str(&self.id_fn)
            .bool(self.valid_fn)
            .bytes(self.r_fn.as_bytes())
            .bytes(self.r_mu.as_bytes())
            .u64(self.t_hn.0)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            id_fn: r.string()?,
            valid_fn: r.bool()?,
            r_fn: nonce(&mut r)?,
            r_mu: nonce(&mut r)?,
            t_hn: Timestamp(r.u64()?),
        };
        r.finish()?;
        Ok(out)
    }
}

/// The Visa master key together with the Visa number and expiry the MU
/// cannot read from the sealed Visa itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyDelivery {
    pub master_key: SymmetricKey,
    pub visa_no: u64,
    pub expiry: Timestamp,
}

impl KeyDelivery {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .bytes(self.master_key.as_bytes())
            .u64(self.visa_no)
            .u64(self.expiry.0)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            master_key: SymmetricKey::from_bytes(r.fixed()?),
            visa_no: r.u64()?,
            expiry: Timestamp(r.u64()?),
        };
        r.finish()?;
        Ok(out)
    }
}

/// `(r′_MU, Visa_No)` under SK′: proves knowledge of the Visa contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceProof {
    pub r1_mu: Nonce,
    pub visa_no: u64,
}

impl ServiceProof {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new().bytes(self.r1_mu.as_bytes()).u64(self.visa_no).finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            r1_mu: nonce(&mut r)?,
            visa_no: r.u64()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// `(r′_FN, Pass_No)` under SK″.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceAck {
    pub r1_fn: Nonce,
    pub pass_no: u64,
}

impl ServiceAck {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new().bytes(self.r1_fn.as_bytes()).u64(self.pass_no).finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let out = Self {
            r1_fn: nonce(&mut r)?,
            pass_no: r.u64()?,
        };
        r.finish()?;
        Ok(out)
    }
}

/// `(Pass_No, RevOke)` with the HN signature over both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassportRevocation {
    pub pass_no: u64,
    pub signature: Vec<u8>,
}

impl PassportRevocation {
    pub fn signed_bytes(pass_no: u64) -> Vec<u8> {
        Writer::new().u64(pass_no).bytes(REVOKE_LITERAL).finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .u64(self.pass_no)
            .bytes(REVOKE_LITERAL)
            .bytes(&self.signature)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let pass_no = r.u64()?;
        literal(&mut r)?;
        let signature = r.vec()?;
        r.finish()?;
        Ok(Self { pass_no, signature })
    }
}

/// Outer layer of a Visa revocation: `(Pass_No, Visa_No, RevOke, inner)`
/// where `inner` is [`VisaRevocation::statement`] under SK′.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisaRevocation {
    pub pass_no: u64,
    pub visa_no: u64,
    pub inner: Vec<u8>,
}

impl VisaRevocation {
    /// `(Pass_No, Visa_No, RevOke)`: the plaintext of both layers.
    pub fn statement(pass_no: u64, visa_no: u64) -> Vec<u8> {
        Writer::new().u64(pass_no).u64(visa_no).bytes(REVOKE_LITERAL).finish()
    }

    pub fn parse_statement(bytes: &[u8]) -> Result<(u64, u64), EncodingError> {
        let mut r = Reader::new(bytes);
        let pass_no = r.u64()?;
        let visa_no = r.u64()?;
        literal(&mut r)?;
        r.finish()?;
        Ok((pass_no, visa_no))
    }

    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .u64(self.pass_no)
            .u64(self.visa_no)
            .bytes(REVOKE_LITERAL)
            .bytes(&self.inner)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let pass_no = r.u64()?;
        let visa_no = r.u64()?;
        literal(&mut r)?;
        let inner = r.vec()?;
        r.finish()?;
        Ok(Self {
            pass_no,
            visa_no,
            inner,
        })
    }
}
