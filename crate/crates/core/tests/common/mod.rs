//! Helpers shared by the integration tests: an independent KDF oracle,
//! random message generators and trace queries.

#![allow(dead_code)]

use std::collections::BTreeMap;

use pvkit::actors::{ActorEvent, Belief, KeyKind, NonceLabel};
use pvkit::crypto::{Nonce, SymmetricKey, Timestamp, NONCE_LEN};
use pvkit::sim::{Trace, TraceEntry};
use pvkit::tokens::{CertRole, Certificate, SealedPassport, SealedVisa};
use pvkit::wire::{
    ForwardToHn, HnDecision, PassportRevoke, ProtocolMessage, RejectReason, ServiceRequest, ServiceResponse, VisaGrant,
    VisaRequest, VisaRevoke,
};
use rand::Rng;
use sha2::{Digest, Sha256};

/// SHA-256 over parts each prefixed with a 4-byte big-endian length,
/// written out by hand rather than through the crate's encoder.
pub fn oracle_kdf(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u32).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn oracle_session_mu_hn(master: &[u8], id_mu: &str, id_fn: &str) -> [u8; 32] {
    oracle_kdf(&[master, id_mu.as_bytes(), id_fn.as_bytes()])
}

pub fn oracle_session_mu_fn(pass_no: u64, id_fn: &str, nonces: [&[u8]; 4]) -> [u8; 32] {
    let pn = pass_no.to_be_bytes();
    oracle_kdf(&[&pn, id_fn.as_bytes(), nonces[0], nonces[1], nonces[2], nonces[3]])
}

pub fn oracle_service_first(chain: &[u8], visa_no: u64, pass_no: u64) -> [u8; 32] {
    oracle_kdf(&[chain, &visa_no.to_be_bytes(), &pass_no.to_be_bytes()])
}

pub fn oracle_service_second(first: &[u8], visa_master: &[u8], r1_mu: &[u8]) -> [u8; 32] {
    oracle_kdf(&[first, visa_master, r1_mu])
}

pub fn oracle_service_third(second: &[u8], first: &[u8], r1_fn: &[u8]) -> [u8; 32] {
    oracle_kdf(&[second, first, r1_fn])
}

/// Every event one actor reported, in order.
pub fn events_of<'a>(trace: &'a Trace, actor: &str) -> Vec<&'a ActorEvent> {
    trace
        .entries
        .iter()
        .filter_map(|(_, e)| match e {
            TraceEntry::Event { actor: a, event } if a == actor => Some(event),
            _ => None,
        })
        .collect()
}

/// Keys of one kind derived by one actor, in order.
pub fn keys_of(trace: &Trace, actor: &str, kind: KeyKind) -> Vec<SymmetricKey> {
    trace
        .derived_keys(kind)
        .into_iter()
        .filter(|(a, _)| a == actor)
        .map(|(_, k)| k)
        .collect()
}

/// Nonces with one label that an actor came to believe fresh, in order.
pub fn nonces_of(trace: &Trace, actor: &str, label: NonceLabel) -> Vec<Nonce> {
    events_of(trace, actor)
        .into_iter()
        .filter_map(|e| match e {
            ActorEvent::Belief(Belief::Fresh { label: l, nonce }) if *l == label => Some(*nonce),
            _ => None,
        })
        .collect()
}

fn bytes(rng: &mut impl Rng, max: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max);
    (0..len).map(|_| rng.gen()).collect()
}

fn text(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(0..24);
    (0..len)
        .map(|_| match rng.gen_range(0..4) {
            0 => 'é',
            1 => '漢',
            _ => rng.gen_range(b'a'..=b'z') as char,
        })
        .collect()
}

fn nonce(rng: &mut impl Rng) -> Nonce {
    let mut b = [0u8; NONCE_LEN];
    rng.fill(&mut b);
    Nonce::from_bytes(b)
}

fn certificate(rng: &mut impl Rng) -> Certificate {
    Certificate {
        subject_id: text(rng),
        subject_public_key: bytes(rng, 40),
        role: if rng.gen() {
            CertRole::NetworkProvider
        } else {
            CertRole::IdentityProvider
        },
        expiry: Timestamp(rng.gen()),
        ca_signature: bytes(rng, 64),
    }
}

pub const VARIANTS: usize = 9;

/// A random message of variant `v` (0..9), in tag order.
pub fn random_message(rng: &mut impl Rng, v: usize) -> ProtocolMessage {
    match v {
        0 => ProtocolMessage::VisaRequest(VisaRequest {
            passport: SealedPassport(bytes(rng, 200)),
            cipher_to_hn: bytes(rng, 100),
            pass_no: rng.gen(),
            t_mu: Timestamp(rng.gen()),
            cert_hn: certificate(rng),
            descriptor: text(rng),
            r2_mu: nonce(rng),
        }),
        1 => ProtocolMessage::ForwardToHn(ForwardToHn {
            passport: SealedPassport(bytes(rng, 200)),
            cipher_to_hn: bytes(rng, 100),
            t_mu: Timestamp(rng.gen()),
            cert_fn: certificate(rng),
            t_fn: Timestamp(rng.gen()),
            sealed_r_fn: bytes(rng, 80),
        }),
        2 => ProtocolMessage::HnDecision(HnDecision {
            for_fn: bytes(rng, 150),
            for_mu: bytes(rng, 100),
        }),
        3 => ProtocolMessage::VisaGrant(VisaGrant {
            visa: SealedVisa(bytes(rng, 200)),
            for_mu: bytes(rng, 100),
            key_delivery: bytes(rng, 80),
            r2_fn: nonce(rng),
        }),
        4 => ProtocolMessage::ServiceRequest(ServiceRequest {
            descriptor: text(rng),
            visa: SealedVisa(bytes(rng, 200)),
            cipher1: bytes(rng, 60),
        }),
        5 => ProtocolMessage::ServiceResponse(ServiceResponse {
            cipher2: bytes(rng, 60),
            payload: bytes(rng, 120),
        }),
        6 => ProtocolMessage::PassportRevoke(PassportRevoke {
            sealed: bytes(rng, 150),
        }),
        7 => ProtocolMessage::VisaRevoke(VisaRevoke {
            visa_no: rng.gen(),
            body: bytes(rng, 150),
        }),
        8 => ProtocolMessage::Reject(RejectReason::ALL[rng.gen_range(0..RejectReason::ALL.len())]),
        _ => panic!("variant {v} out of range"),
    }
}

/// Counts of messages per variant name.
pub fn tally(names: impl IntoIterator<Item = &'static str>) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for n in names {
        *out.entry(n).or_default() += 1;
    }
    out
}
