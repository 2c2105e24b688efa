//! The three protocol roles and what they report to an observer.
//!
//! Every role owns its [`CryptoContext`](crate::crypto::CryptoContext) and
//! records [`ActorEvent`]s (trust transitions, beliefs, derived keys) that a
//! harness drains after each handler call. The events are simulation
//! instrumentation; they carry key material so an auditor can compare both
//! sides of a session.

pub mod foreign_network;
pub mod home_network;
pub mod mobile_user;

use crate::crypto::KeyPair;
use crate::crypto::{Nonce, SymmetricKey};
use crate::tokens::Certificate;

/// Identity and trust anchor shared by network-side roles.
#[derive(Debug, Clone)]
pub struct Credentials {
    pub id: String,
    pub keys: KeyPair,
    pub cert: Certificate,
    pub ca_public_key: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum TrustLevel {
    #[default]
    None,
    Partial,
    Full,
}

impl TrustLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrustLevel::None => "none",
            TrustLevel::Partial => "partial",
            TrustLevel::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(TrustLevel::None),
            "partial" => Some(TrustLevel::Partial),
            "full" => Some(TrustLevel::Full),
            _ => None,
        }
    }
}

/// Which link of the key chain a key is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyKind {
    /// Master key shared by MU and HN.
    MasterMuHn,
    /// Session key between MU and HN.
    SessionMuHn,
    /// Master key shared by MU and FN, carried inside the Visa.
    MasterMuFn,
    /// Session key between MU and FN, established at Visa acquisition.
    SessionMuFn,
    /// First per-service key.
    ServiceFirst,
    /// Second per-service key.
    ServiceSecond,
    /// Third per-service key; becomes the next chain key.
    ServiceThird,
}

impl KeyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyKind::MasterMuHn => "K_MU-HN",
            KeyKind::SessionMuHn => "SK_MU-HN",
            KeyKind::MasterMuFn => "K_MU-FN",
            KeyKind::SessionMuFn => "SK_MU-FN",
            KeyKind::ServiceFirst => "SK1",
            KeyKind::ServiceSecond => "SK2",
            KeyKind::ServiceThird => "SK3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            KeyKind::MasterMuHn,
            KeyKind::SessionMuHn,
            KeyKind::MasterMuFn,
            KeyKind::SessionMuFn,
            KeyKind::ServiceFirst,
            KeyKind::ServiceSecond,
            KeyKind::ServiceThird,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// Names of the nonces a role can come to believe fresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NonceLabel {
    RMu,
    RFn,
    R2Mu,
    R2Fn,
    R1Mu,
    R1Fn,
}

impl NonceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            NonceLabel::RMu => "r_MU",
            NonceLabel::RFn => "r_FN",
            NonceLabel::R2Mu => "r2_MU",
            NonceLabel::R2Fn => "r2_FN",
            NonceLabel::R1Mu => "r1_MU",
            NonceLabel::R1Fn => "r1_FN",
        }
    }
}

/// A belief held by the reporting role.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Belief {
    Fresh { label: NonceLabel, nonce: Nonce },
    SharedKey { peer: String, kind: KeyKind },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRecord {
    pub kind: KeyKind,
    pub peer: String,
    pub visa_no: Option<u64>,
    pub key: SymmetricKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActorEvent {
    Trust { peer: String, level: TrustLevel },
    Belief(Belief),
    KeyDerived(KeyRecord),
}

/// Append-only event buffer a role writes into.
#[derive(Debug, Default)]
pub(crate) struct EventLog(Vec<ActorEvent>);

impl EventLog {
    pub(crate) fn trust(&mut self, peer: &str, level: TrustLevel) {
        self.0.push(ActorEvent::Trust {
            peer: peer.to_string(),
            level,
        });
    }

    pub(crate) fn fresh(&mut self, label: NonceLabel, nonce: Nonce) {
        self.0.push(ActorEvent::Belief(Belief::Fresh { label, nonce }));
    }

    pub(crate) fn shared_key(&mut self, peer: &str, kind: KeyKind) {
        self.0.push(ActorEvent::Belief(Belief::SharedKey {
            peer: peer.to_string(),
            kind,
        }));
    }

    pub(crate) fn key(&mut self, kind: KeyKind, peer: &str, visa_no: Option<u64>, key: &SymmetricKey) {
        self.0.push(ActorEvent::KeyDerived(KeyRecord {
            kind,
            peer: peer.to_string(),
            visa_no,
            key: key.clone(),
        }));
    }

    pub(crate) fn drain(&mut self) -> Vec<ActorEvent> {
        std::mem::take(&mut self.0)
    }
}
