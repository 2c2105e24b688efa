//! Mobile user: holds the smart card and Visas, and drives Visa acquisition,
//! service sessions, and Visa revocation.
//!
//! This role performs symmetric operations and hashing only. The Passport,
//! the Visa and the HN certificate are carried as opaque bytes.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{ActorEvent, EventLog, KeyKind, NonceLabel, TrustLevel};
use crate::clock::{SimClock, DEFAULT_FRESHNESS_WINDOW_MS};
use crate::crypto::{CryptoContext, Nonce, SymmetricKey, Timestamp};
use crate::encoding::{EncodingError, Reader, Writer};
use crate::key_schedule;
use crate::tokens::{Certificate, SealedPassport, SealedVisa};
use crate::wire::{
    HnChallenge, KeyDelivery, MuVerdict, ServiceAck, ServiceProof, ServiceRequest, ServiceResponse, VisaGrant,
    VisaRequest, VisaRevocation, VisaRevoke,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisaRejection {
    IdMismatch,
    NonceMismatch,
    Stale,
    InvalidFn,
    BadKeyDelivery,
}

impl VisaRejection {
    pub fn as_str(self) -> &'static str {
        match self {
            VisaRejection::IdMismatch => "id_mismatch",
            VisaRejection::NonceMismatch => "nonce_mismatch",
            VisaRejection::Stale => "stale",
            VisaRejection::InvalidFn => "invalid_fn",
            VisaRejection::BadKeyDelivery => "bad_key_delivery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceRejection {
    BadResponse,
    PassMismatch,
}

impl ServiceRejection {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceRejection::BadResponse => "bad_response",
            ServiceRejection::PassMismatch => "pass_mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MuError {
    #[error("smart card not provisioned")]
    NotProvisioned,
    #[error("visa {0} is not held")]
    UnknownVisa(u64),
    #[error("visa {0} has expired")]
    LocallyExpired(u64),
    #[error("visa grant rejected: {}", .0.as_str())]
    RejectVisa(VisaRejection),
    #[error("service response rejected: {}", .0.as_str())]
    RejectService(ServiceRejection),
}

impl MuError {
    /// Short reason code used in traces.
    pub fn reason(&self) -> &'static str {
        match self {
            MuError::NotProvisioned => "not_provisioned",
            MuError::UnknownVisa(_) => "unknown_visa",
            MuError::LocallyExpired(_) => "locally_expired",
            MuError::RejectVisa(r) => r.as_str(),
            MuError::RejectService(r) => r.as_str(),
        }
    }
}

/// Contents of the MU's smart card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmartCard {
    pub sc_id: Vec<u8>,
    pub master_key: SymmetricKey,
    pub passport: SealedPassport,
    pub pass_no: u64,
    pub cert_hn: Certificate,
}

impl SmartCard {
    /// File format: length-prefixed `sc_id, K_MU-HN, Passport, Pass_No, Cert_HN`.
    pub fn to_bytes(&self) -> Vec<u8> {
        Writer::new()
            .bytes(&self.sc_id)
            .bytes(self.master_key.as_bytes())
            .bytes(&self.passport.0)
            .u64(self.pass_no)
            .bytes(&self.cert_hn.encode())
            .finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(data);
        let card = Self {
            sc_id: r.vec()?,
            master_key: SymmetricKey::from_bytes(r.fixed()?),
            passport: SealedPassport(r.vec()?),
            pass_no: r.u64()?,
            cert_hn: Certificate::decode(r.bytes()?)?,
        };
        r.finish()?;
        Ok(card)
    }
}

/// A Visa held by the MU together with its key material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldVisa {
    pub visa: SealedVisa,
    pub id_fn: String,
    pub master_key: SymmetricKey,
    pub chain_key: SymmetricKey,
    pub pass_no: u64,
    pub expiry: Timestamp,
    pub sessions_completed: u64,
}

#[derive(Debug, Clone)]
struct Acquisition {
    r_mu: Nonce,
    r2_mu: Nonce,
    sk_mu_hn: SymmetricKey,
}

#[derive(Debug, Clone)]
struct ServiceInFlight {
    first: SymmetricKey,
    r1_mu: Nonce,
}

/// Visas are keyed by issuing FN and number; FNs number independently.
pub type VisaKey = (String, u64);

pub struct MobileUser {
    id: String,
    card: Option<SmartCard>,
    clock: SimClock,
    freshness_window: u64,
    crypto: CryptoContext,
    visas: BTreeMap<VisaKey, HeldVisa>,
    acquisitions: BTreeMap<String, Acquisition>,
    services: BTreeMap<VisaKey, ServiceInFlight>,
    mutual_auth: BTreeMap<VisaKey, u64>,
    events: EventLog,
}

impl std::fmt::Debug for MobileUser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MobileUser")
            .field("id", &self.id)
            .field("provisioned", &self.card.is_some())
            .field("visas", &self.visas.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl MobileUser {
    pub fn new(id: &str, clock: SimClock, crypto: CryptoContext) -> Self {
        Self {
            id: id.to_string(),
            card: None,
            clock,
            freshness_window: DEFAULT_FRESHNESS_WINDOW_MS,
            crypto,
            visas: BTreeMap::new(),
            acquisitions: BTreeMap::new(),
            services: BTreeMap::new(),
            mutual_auth: BTreeMap::new(),
            events: EventLog::default(),
        }
    }

    pub fn with_freshness_window(mut self, ms: u64) -> Self {
        self.freshness_window = ms;
        self
    }

    pub fn provision(&mut self, card: SmartCard) {
        let hn = card.cert_hn.subject_id.clone();
        self.events.trust(&hn, TrustLevel::Full);
        self.events.key(KeyKind::MasterMuHn, &hn, None, &card.master_key);
        self.card = Some(card);
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn smart_card(&self) -> Option<&SmartCard> {
        self.card.as_ref()
    }

    pub fn crypto(&self) -> &CryptoContext {
        &self.crypto
    }

    pub fn visas(&self) -> &BTreeMap<VisaKey, HeldVisa> {
        &self.visas
    }

    /// Most recently acquired Visa issued by `id_fn`.
    pub fn latest_visa_from(&self, id_fn: &str) -> Option<u64> {
        self.visas.keys().filter(|(f, _)| f == id_fn).map(|(_, n)| *n).max()
    }

    pub fn chain_key(&self, id_fn: &str, visa_no: u64) -> Option<&SymmetricKey> {
        self.visas.get(&(id_fn.to_string(), visa_no)).map(|v| &v.chain_key)
    }

    /// Number of sessions on `visa_no` that ended in mutual authentication.
    pub fn mutual_auth_sessions(&self, id_fn: &str, visa_no: u64) -> u64 {
        self.mutual_auth
            .get(&(id_fn.to_string(), visa_no))
            .copied()
            .unwrap_or(0)
    }

    pub fn drain_events(&mut self) -> Vec<ActorEvent> {
        self.events.drain()
    }

    /// Starts acquiring a Visa from `id_fn`.
    pub fn begin_visa_acquisition(&mut self, id_fn: &str, descriptor: &str) -> Result<VisaRequest, MuError> {
        let card = self.card.clone().ok_or(MuError::NotProvisioned)?;
        let sk_mu_hn = key_schedule::session_mu_hn(&mut self.crypto, &card.master_key, &self.id, id_fn)
            .map_err(|_| MuError::RejectVisa(VisaRejection::IdMismatch))?;
        let r_mu = self.crypto.fresh_nonce();
        let r2_mu = self.crypto.fresh_nonce();
        let t_mu = self.clock.now();
        let cipher_to_hn = self.crypto.enc_sym(
            &sk_mu_hn,
            &HnChallenge {
                id_fn: id_fn.to_string(),
                r_mu,
                t_mu,
            }
            .encode(),
        );
        self.events
            .key(KeyKind::SessionMuHn, &card.cert_hn.subject_id, None, &sk_mu_hn);
        self.acquisitions
            .insert(id_fn.to_string(), Acquisition { r_mu, r2_mu, sk_mu_hn });
        Ok(VisaRequest {
            passport: card.passport,
            cipher_to_hn,
            pass_no: card.pass_no,
            t_mu,
            cert_hn: card.cert_hn,
            descriptor: descriptor.to_string(),
            r2_mu,
        })
    }

    /// Checks the HN's verdict relayed in the grant, derives SK_MU-FN and
    /// stores the Visa with its master key.
    pub fn complete_visa_acquisition(&mut self, msg: &VisaGrant) -> Result<u64, MuError> {
        let reject = MuError::RejectVisa;
        let now = self.clock.now();
        let card = self.card.clone().ok_or(MuError::NotProvisioned)?;

        let mut matched = None;
        for (id_fn, acq) in &self.acquisitions {
            if let Ok(pt) = self.crypto.dec_sym(&acq.sk_mu_hn, &msg.for_mu) {
                matched = Some((id_fn.clone(), acq.clone(), pt));
                break;
            }
        }
        let (id_fn, acq, pt) = matched.ok_or(reject(VisaRejection::NonceMismatch))?;
        let verdict = MuVerdict::decode(&pt).map_err(|_| reject(VisaRejection::IdMismatch))?;
        if verdict.id_fn != id_fn {
            return Err(reject(VisaRejection::IdMismatch));
        }
        if verdict.r_mu != acq.r_mu {
            return Err(reject(VisaRejection::NonceMismatch));
        }
        if now.distance(verdict.t_hn) > self.freshness_window {
            return Err(reject(VisaRejection::Stale));
        }
        if !verdict.valid_fn {
            return Err(reject(VisaRejection::InvalidFn));
        }

        let sk_mu_fn = key_schedule::session_mu_fn(
            &mut self.crypto,
            card.pass_no,
            &id_fn,
            &acq.r_mu,
            &verdict.r_fn,
            &acq.r2_mu,
            &msg.r2_fn,
        )
        .expect("non-empty kdf parts");
        let delivery = self
            .crypto
            .dec_sym(&sk_mu_fn, &msg.key_delivery)
            .ok()
            .and_then(|pt| KeyDelivery::decode(&pt).ok())
            .ok_or(reject(VisaRejection::BadKeyDelivery))?;
        let key = (id_fn.clone(), delivery.visa_no);
        if self.visas.contains_key(&key) {
            return Err(reject(VisaRejection::BadKeyDelivery));
        }

        self.acquisitions.remove(&id_fn);
        self.visas.insert(
            key,
            HeldVisa {
                visa: msg.visa.clone(),
                id_fn: id_fn.clone(),
                master_key: delivery.master_key.clone(),
                chain_key: sk_mu_fn.clone(),
                pass_no: card.pass_no,
                expiry: delivery.expiry,
                sessions_completed: 0,
            },
        );
        self.events.fresh(NonceLabel::RMu, acq.r_mu);
        self.events.fresh(NonceLabel::RFn, verdict.r_fn);
        self.events.fresh(NonceLabel::R2Mu, acq.r2_mu);
        self.events.fresh(NonceLabel::R2Fn, msg.r2_fn);
        self.events.shared_key(&id_fn, KeyKind::MasterMuFn);
        self.events.shared_key(&id_fn, KeyKind::SessionMuFn);
        self.events.key(
            KeyKind::MasterMuFn,
            &id_fn,
            Some(delivery.visa_no),
            &delivery.master_key,
        );
        self.events
            .key(KeyKind::SessionMuFn, &id_fn, Some(delivery.visa_no), &sk_mu_fn);
        self.events.trust(&id_fn, TrustLevel::Partial);
        Ok(delivery.visa_no)
    }

    /// Opens a service session on a held Visa.
    pub fn begin_service(&mut self, id_fn: &str, visa_no: u64, descriptor: &str) -> Result<ServiceRequest, MuError> {
        let key = (id_fn.to_string(), visa_no);
        let held = self.visas.get(&key).cloned().ok_or(MuError::UnknownVisa(visa_no))?;
        if held.expiry < self.clock.now() {
            return Err(MuError::LocallyExpired(visa_no));
        }
        let first = key_schedule::service_first(&mut self.crypto, &held.chain_key, visa_no, held.pass_no)
            .expect("non-empty kdf parts");
        let r1_mu = self.crypto.fresh_nonce();
        let cipher1 = self.crypto.enc_sym(&first, &ServiceProof { r1_mu, visa_no }.encode());
        self.events
            .key(KeyKind::ServiceFirst, &held.id_fn, Some(visa_no), &first);
        self.services.insert(key, ServiceInFlight { first, r1_mu });
        Ok(ServiceRequest {
            descriptor: descriptor.to_string(),
            visa: held.visa,
            cipher1,
        })
    }

    /// Finishes a service session: recovers the FN nonce, derives the third
    /// key, decrypts the service payload, and advances the chain key.
    pub fn complete_service(&mut self, msg: &ServiceResponse) -> Result<Vec<u8>, MuError> {
        let bad = MuError::RejectService(ServiceRejection::BadResponse);
        let mut matched = None;
        for (key, flight) in &self.services {
            let held = &self.visas[key];
            let second = key_schedule::service_second(&mut self.crypto, &flight.first, &held.master_key, &flight.r1_mu)
                .expect("non-empty kdf parts");
            if let Ok(pt) = self.crypto.dec_sym(&second, &msg.cipher2) {
                matched = Some((key.clone(), flight.clone(), second, pt));
                break;
            }
        }
        let (key, flight, second, pt) = matched.ok_or(bad.clone())?;
        let visa_no = key.1;
        let ack = ServiceAck::decode(&pt).map_err(|_| bad.clone())?;
        let held = self.visas.get(&key).cloned().expect("in-flight visa is held");
        if ack.pass_no != held.pass_no {
            return Err(MuError::RejectService(ServiceRejection::PassMismatch));
        }
        let third = key_schedule::service_third(&mut self.crypto, &second, &flight.first, &ack.r1_fn)
            .expect("non-empty kdf parts");
        let service = self.crypto.dec_sym(&third, &msg.payload).map_err(|_| bad)?;

        self.services.remove(&key);
        let entry = self.visas.get_mut(&key).expect("held");
        entry.chain_key = third.clone();
        entry.sessions_completed += 1;
        *self.mutual_auth.entry(key).or_default() += 1;

        let peer = held.id_fn;
        self.events.fresh(NonceLabel::R1Mu, flight.r1_mu);
        self.events.fresh(NonceLabel::R1Fn, ack.r1_fn);
        self.events.key(KeyKind::ServiceSecond, &peer, Some(visa_no), &second);
        self.events.key(KeyKind::ServiceThird, &peer, Some(visa_no), &third);
        self.events.shared_key(&peer, KeyKind::ServiceSecond);
        self.events.shared_key(&peer, KeyKind::ServiceThird);
        Ok(service)
    }

    /// Builds the nested revocation for `visa_no` and forgets the Visa.
    pub fn revoke_visa(&mut self, id_fn: &str, visa_no: u64) -> Result<VisaRevoke, MuError> {
        let key = (id_fn.to_string(), visa_no);
        let held = self.visas.remove(&key).ok_or(MuError::UnknownVisa(visa_no))?;
        self.services.remove(&key);
        let statement = VisaRevocation::statement(held.pass_no, visa_no);
        let first = key_schedule::service_first(&mut self.crypto, &held.chain_key, visa_no, held.pass_no)
            .expect("non-empty kdf parts");
        let inner = self.crypto.enc_sym(&first, &statement);
        let outer = VisaRevocation {
            pass_no: held.pass_no,
            visa_no,
            inner,
        };
        let body = self.crypto.enc_sym(&held.chain_key, &outer.encode());
        Ok(VisaRevoke { visa_no, body })
    }
}
