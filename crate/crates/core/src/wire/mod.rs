//! Wire format for every message exchanged between protocol roles.
//!
//! A message is a 1-byte variant tag followed by its fields in protocol
//! order, each prefixed with a 4-byte big-endian length. Decoding is total:
//! any byte string yields either a message or [`CodecError::MalformedMessage`].

mod payloads;

use std::fmt::Write as _;

use thiserror::Error;

use crate::crypto::{Nonce, Timestamp};
use crate::encoding::{EncodingError, Reader, Writer};
use crate::tokens::{Certificate, SealedPassport, SealedVisa};

pub use payloads::{
    FnVerdict, HnChallenge, KeyDelivery, MuVerdict, PassportRevocation, ServiceAck, ServiceProof, VisaRevocation,
    REVOKE_LITERAL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
}

impl From<EncodingError> for CodecError {
    fn from(e: EncodingError) -> Self {
        CodecError::MalformedMessage(e.to_string())
    }
}

/// Why a role refused a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    Stale,
    BadCert,
    BadPassport,
    IdMismatch,
    PolicyDenied,
    BadSignature,
    NonceMismatch,
    InvalidUser,
    BadVisa,
    Revoked,
    Expired,
    BadProof,
    BadRevoke,
    Malformed,
    Unexpected,
}

impl RejectReason {
    pub const ALL: [RejectReason; 15] = [
        RejectReason::Stale,
        RejectReason::BadCert,
        RejectReason::BadPassport,
        RejectReason::IdMismatch,
        RejectReason::PolicyDenied,
        RejectReason::BadSignature,
        RejectReason::NonceMismatch,
        RejectReason::InvalidUser,
        RejectReason::BadVisa,
        RejectReason::Revoked,
        RejectReason::Expired,
        RejectReason::BadProof,
        RejectReason::BadRevoke,
        RejectReason::Malformed,
        RejectReason::Unexpected,
    ];

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|r| *r == self).expect("listed") as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Stale => "stale",
            RejectReason::BadCert => "bad_cert",
            RejectReason::BadPassport => "bad_passport",
            RejectReason::IdMismatch => "id_mismatch",
            RejectReason::PolicyDenied => "policy_denied",
            RejectReason::BadSignature => "bad_signature",
            RejectReason::NonceMismatch => "nonce_mismatch",
            RejectReason::InvalidUser => "invalid_user",
            RejectReason::BadVisa => "bad_visa",
            RejectReason::Revoked => "revoked",
            RejectReason::Expired => "expired",
            RejectReason::BadProof => "bad_proof",
            RejectReason::BadRevoke => "bad_revoke",
            RejectReason::Malformed => "malformed",
            RejectReason::Unexpected => "unexpected",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// MU → FN: passport, HN challenge, claimed passport number, certificate of
/// the HN, and the MU's second nonce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisaRequest {
    pub passport: SealedPassport,
    /// `HnChallenge` under SK_MU-HN.
    pub cipher_to_hn: Vec<u8>,
    pub pass_no: u64,
    pub t_mu: Timestamp,
    pub cert_hn: Certificate,
    pub descriptor: String,
    pub r2_mu: Nonce,
}

/// FN → HN: relayed passport and challenge plus the FN's credentials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardToHn {
    pub passport: SealedPassport,
    pub cipher_to_hn: Vec<u8>,
    pub t_mu: Timestamp,
    pub cert_fn: Certificate,
    pub t_fn: Timestamp,
    /// r_FN sealed under the HN public key.
    pub sealed_r_fn: Vec<u8>,
}

/// HN → FN: signed verdict for the FN and an encrypted verdict for the MU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HnDecision {
    /// Signed `FnVerdict` sealed under the FN public key.
    pub for_fn: Vec<u8>,
    /// `MuVerdict` under SK_MU-HN.
    pub for_mu: Vec<u8>,
}

/// FN → MU: the Visa, the relayed HN verdict, and the Visa master key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisaGrant {
    pub visa: SealedVisa,
    pub for_mu: Vec<u8>,
    /// `KeyDelivery` under SK_MU-FN.
    pub key_delivery: Vec<u8>,
    pub r2_fn: Nonce,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceRequest {
    pub descriptor: String,
    pub visa: SealedVisa,
    /// `ServiceProof` under SK′.
    pub cipher1: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceResponse {
    /// `ServiceAck` under SK″.
    pub cipher2: Vec<u8>,
    /// Service bytes under SK‴.
    pub payload: Vec<u8>,
}

/// HN → FN: signed `PassportRevocation` sealed under the FN public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassportRevoke {
    pub sealed: Vec<u8>,
}

/// MU → FN: nested revocation under the Visa's chain key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisaRevoke {
    /// Lookup hint naming the Visa whose chain key opens `body`.
    pub visa_no: u64,
    /// `VisaRevocation` under the chain key.
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    VisaRequest(VisaRequest),
    ForwardToHn(ForwardToHn),
    HnDecision(HnDecision),
    VisaGrant(VisaGrant),
    ServiceRequest(ServiceRequest),
    ServiceResponse(ServiceResponse),
    PassportRevoke(PassportRevoke),
    VisaRevoke(VisaRevoke),
    Reject(RejectReason),
}

mod tag {
    pub const VISA_REQUEST: u8 = 0x01;
    pub const FORWARD_TO_HN: u8 = 0x02;
    pub const HN_DECISION: u8 = 0x03;
    pub const VISA_GRANT: u8 = 0x04;
    pub const SERVICE_REQUEST: u8 = 0x05;
    pub const SERVICE_RESPONSE: u8 = 0x06;
    pub const PASSPORT_REVOKE: u8 = 0x07;
    pub const VISA_REVOKE: u8 = 0x08;
    pub const REJECT: u8 = 0x09;
}

fn nonce(r: &mut Reader<'_>) -> Result<Nonce, EncodingError> {
    Ok(Nonce::from_bytes(r.fixed()?))
}

fn certificate(r: &mut Reader<'_>) -> Result<Certificate, EncodingError> {
    Certificate::decode(r.bytes()?)
}

impl ProtocolMessage {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolMessage::VisaRequest(_) => "VisaRequest",
            ProtocolMessage::ForwardToHn(_) => "ForwardToHN",
            ProtocolMessage::HnDecision(_) => "HNDecision",
            ProtocolMessage::VisaGrant(_) => "VisaGrant",
            ProtocolMessage::ServiceRequest(_) => "ServiceRequest",
            ProtocolMessage::ServiceResponse(_) => "ServiceResponse",
            ProtocolMessage::PassportRevoke(_) => "PassportRevoke",
            ProtocolMessage::VisaRevoke(_) => "VisaRevoke",
            ProtocolMessage::Reject(_) => "Reject",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            ProtocolMessage::VisaRequest(m) => Writer::with_tag(tag::VISA_REQUEST)
                .bytes(&m.passport.0)
                .bytes(&m.cipher_to_hn)
                .u64(m.pass_no)
                .u64(m.t_mu.0)
                .bytes(&m.cert_hn.encode())
                .str(&m.descriptor)
                .bytes(m.r2_mu.as_bytes())
                .finish(),
            ProtocolMessage::ForwardToHn(m) => Writer::with_tag(tag::FORWARD_TO_HN)
                .bytes(&m.passport.0)
                .bytes(&m.cipher_to_hn)
                .u64(m.t_mu.0)
                .bytes(&m.cert_fn.encode())
                .u64(m.t_fn.0)
                .bytes(&m.sealed_r_fn)
                .finish(),
            ProtocolMessage::HnDecision(m) => Writer::with_tag(tag::HN_DECISION)
                .bytes(&m.for_fn)
                .bytes(&m.for_mu)
                .finish(),
            ProtocolMessage::VisaGrant(m) => Writer::with_tag(tag::VISA_GRANT)
                .bytes(&m.visa.0)
                .bytes(&m.for_mu)
                .bytes(&m.key_delivery)
                .bytes(m.r2_fn.as_bytes())
                .finish(),
            ProtocolMessage::ServiceRequest(m) => Writer::with_tag(tag::SERVICE_REQUEST)
                .str(&m.descriptor)
                .bytes(&m.visa.0)
                .bytes(&m.cipher1)
                .finish(),
            ProtocolMessage::ServiceResponse(m) => Writer::with_tag(tag::SERVICE_RESPONSE)
                .bytes(&m.cipher2)
                .bytes(&m.payload)
                .finish(),
            ProtocolMessage::PassportRevoke(m) => Writer::with_tag(tag::PASSPORT_REVOKE).bytes(&m.sealed).finish(),
            ProtocolMessage::VisaRevoke(m) => Writer::with_tag(tag::VISA_REVOKE)
                .u64(m.visa_no)
                .bytes(&m.body)
                .finish(),
            ProtocolMessage::Reject(reason) => Writer::with_tag(tag::REJECT).u8(reason.code()).finish(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let msg = match r.tag()? {
            tag::VISA_REQUEST => ProtocolMessage::VisaRequest(VisaRequest {
                passport: SealedPassport(r.vec()?),
                cipher_to_hn: r.vec()?,
                pass_no: r.u64()?,
                t_mu: Timestamp(r.u64()?),
                cert_hn: certificate(&mut r)?,
                descriptor: r.string()?,
                r2_mu: nonce(&mut r)?,
            }),
            tag::FORWARD_TO_HN => ProtocolMessage::ForwardToHn(ForwardToHn {
                passport: SealedPassport(r.vec()?),
                cipher_to_hn: r.vec()?,
                t_mu: Timestamp(r.u64()?),
                cert_fn: certificate(&mut r)?,
                t_fn: Timestamp(r.u64()?),
                sealed_r_fn: r.vec()?,
            }),
            tag::HN_DECISION => ProtocolMessage::HnDecision(HnDecision {
                for_fn: r.vec()?,
                for_mu: r.vec()?,
            }),
            tag::VISA_GRANT => ProtocolMessage::VisaGrant(VisaGrant {
                visa: SealedVisa(r.vec()?),
                for_mu: r.vec()?,
                key_delivery: r.vec()?,
                r2_fn: nonce(&mut r)?,
            }),
            tag::SERVICE_REQUEST => ProtocolMessage::ServiceRequest(ServiceRequest {
                descriptor: r.string()?,
                visa: SealedVisa(r.vec()?),
                cipher1: r.vec()?,
            }),
            tag::SERVICE_RESPONSE => ProtocolMessage::ServiceResponse(ServiceResponse {
                cipher2: r.vec()?,
                payload: r.vec()?,
            }),
            tag::PASSPORT_REVOKE => ProtocolMessage::PassportRevoke(PassportRevoke { sealed: r.vec()? }),
            tag::VISA_REVOKE => ProtocolMessage::VisaRevoke(VisaRevoke {
                visa_no: r.u64()?,
                body: r.vec()?,
            }),
            tag::REJECT => {
                let code = r.u8()?;
                let reason = RejectReason::from_code(code)
                    .ok_or_else(|| CodecError::MalformedMessage(format!("unknown reject code {code}")))?;
                ProtocolMessage::Reject(reason)
            }
            other => return Err(CodecError::MalformedMessage(format!("unknown tag {other:#04x}"))),
        };
        r.finish()?;
        Ok(msg)
    }

    /// Field names and lengths in wire order, for trace annotation.
    pub fn field_summary(&self) -> Vec<(&'static str, String)> {
        let len = |b: &[u8]| format!("{} bytes", b.len());
        match self {
            ProtocolMessage::VisaRequest(m) => vec![
                ("passport", len(&m.passport.0)),
                ("cipher_to_hn", len(&m.cipher_to_hn)),
                ("pass_no", m.pass_no.to_string()),
                ("t_mu", m.t_mu.0.to_string()),
                ("cert_hn", m.cert_hn.subject_id.clone()),
                ("descriptor", m.descriptor.clone()),
                ("r2_mu", hex::encode(m.r2_mu.as_bytes())),
            ],
            ProtocolMessage::ForwardToHn(m) => vec![
                ("passport", len(&m.passport.0)),
                ("cipher_to_hn", len(&m.cipher_to_hn)),
                ("t_mu", m.t_mu.0.to_string()),
                ("cert_fn", m.cert_fn.subject_id.clone()),
                ("t_fn", m.t_fn.0.to_string()),
                ("sealed_r_fn", len(&m.sealed_r_fn)),
            ],
            ProtocolMessage::HnDecision(m) => vec![("for_fn", len(&m.for_fn)), ("for_mu", len(&m.for_mu))],
            ProtocolMessage::VisaGrant(m) => vec![
                ("visa", len(&m.visa.0)),
                ("for_mu", len(&m.for_mu)),
                ("key_delivery", len(&m.key_delivery)),
                ("r2_fn", hex::encode(m.r2_fn.as_bytes())),
            ],
            ProtocolMessage::ServiceRequest(m) => vec![
                ("descriptor", m.descriptor.clone()),
                ("visa", len(&m.visa.0)),
                ("cipher1", len(&m.cipher1)),
            ],
            ProtocolMessage::ServiceResponse(m) => {
                vec![("cipher2", len(&m.cipher2)), ("payload", len(&m.payload))]
            }
            ProtocolMessage::PassportRevoke(m) => vec![("sealed", len(&m.sealed))],
            ProtocolMessage::VisaRevoke(m) => vec![("visa_no", m.visa_no.to_string()), ("body", len(&m.body))],
            ProtocolMessage::Reject(reason) => vec![("reason", reason.to_string())],
        }
    }

    /// Human-readable one-line description.
    pub fn describe(&self) -> String {
        let fields: Vec<String> = self
            .field_summary()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{} {{{}}}", self.name(), fields.join(", "))
    }
}

/// Classic 16-bytes-per-row hex dump.
pub fn hex_dump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (row, chunk) in bytes.chunks(16).enumerate() {
        let _ = write!(out, "{:08x}  ", row * 16);
        for (i, b) in chunk.iter().enumerate() {
            let _ = write!(out, "{b:02x}");
            out.push(if i == 7 { '-' } else { ' ' });
        }
        out.push('\n');
    }
    out
}

/// Annotated dump of a raw message: decoded view (or decode error) followed
/// by the hex rows.
pub fn annotate(bytes: &[u8]) -> String {
    let header = match ProtocolMessage::decode(bytes) {
        Ok(msg) => msg.describe(),
        Err(e) => format!("<{e}>"),
    };
    format!("{header}\n{}", hex_dump(bytes))
}
