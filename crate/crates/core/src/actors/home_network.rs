//! Home network: issues Passports, vouches for its users during Visa
//! acquisition, and originates Passport revocation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{ActorEvent, Credentials, EventLog, KeyKind, NonceLabel, TrustLevel};
use crate::clock::{SimClock, DEFAULT_FRESHNESS_WINDOW_MS};
use crate::crypto::{CryptoContext, Nonce, SymmetricKey, Timestamp, NONCE_LEN};
use crate::key_schedule;
use crate::tokens::{self, CertRole, Certificate, PassportBody, SealedPassport};
use crate::wire::{
    FnVerdict, ForwardToHn, HnChallenge, HnDecision, MuVerdict, PassportRevocation, PassportRevoke, RejectReason,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HnError {
    #[error("identity must be non-empty")]
    EmptyIdentity,
    #[error("smart card already registered for this user")]
    DuplicateRegistration,
    #[error("passport {0} was never issued")]
    UnknownPassport(u64),
    #[error("token operation failed: {0}")]
    Token(#[from] tokens::TokenError),
    #[error("registry line {line}: {reason}")]
    Registry { line: usize, reason: String },
}

/// The HN's record of one issued Passport.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedPassport {
    pub id_mu: String,
    pub sc_id: Vec<u8>,
    pub master_key: SymmetricKey,
    pub expiry: Timestamp,
    pub revoked: bool,
}

/// Everything the MU's smart card is provisioned with at registration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    pub pass_no: u64,
    pub passport: SealedPassport,
    pub master_key: SymmetricKey,
    pub cert_hn: Certificate,
}

pub struct HomeNetwork {
    creds: Credentials,
    clock: SimClock,
    freshness_window: u64,
    crypto: CryptoContext,
    issued: BTreeMap<u64, IssuedPassport>,
    next_pass_no: u64,
    events: EventLog,
}

impl std::fmt::Debug for HomeNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HomeNetwork")
            .field("id", &self.creds.id)
            .field("issued", &self.issued.len())
            .finish_non_exhaustive()
    }
}

impl HomeNetwork {
    pub fn new(creds: Credentials, clock: SimClock, crypto: CryptoContext) -> Self {
        Self {
            creds,
            clock,
            freshness_window: DEFAULT_FRESHNESS_WINDOW_MS,
            crypto,
            issued: BTreeMap::new(),
            next_pass_no: 1,
            events: EventLog::default(),
        }
    }

    pub fn with_freshness_window(mut self, ms: u64) -> Self {
        self.freshness_window = ms;
        self
    }

    pub fn id(&self) -> &str {
        &self.creds.id
    }

    pub fn credentials(&self) -> &Credentials {
        &self.creds
    }

    pub fn crypto(&self) -> &CryptoContext {
        &self.crypto
    }

    pub fn issued(&self) -> &BTreeMap<u64, IssuedPassport> {
        &self.issued
    }

    pub fn drain_events(&mut self) -> Vec<ActorEvent> {
        self.events.drain()
    }

    /// Offline registration: derives the master key from the smart card id
    /// and biometric, issues a Passport valid for `validity_ms`, and returns
    /// the material for the MU's smart card.
    pub fn register_mobile_user(
        &mut self,
        id_mu: &str,
        sc_id: &[u8],
        biometric: &[u8],
        validity_ms: u64,
    ) -> Result<Registration, HnError> {
        if id_mu.is_empty() || sc_id.is_empty() || biometric.is_empty() {
            return Err(HnError::EmptyIdentity);
        }
        if self.issued.values().any(|p| p.id_mu == id_mu && p.sc_id == sc_id) {
            return Err(HnError::DuplicateRegistration);
        }
        let master_key = key_schedule::master_mu_hn(&mut self.crypto, sc_id, biometric).expect("non-empty kdf parts");
        let now = self.clock.now();
        let pass_no = self.next_pass_no;
        let expiry = now.plus(validity_ms.max(1));
        let mut data = BTreeMap::new();
        data.insert("passport_type".to_string(), "roaming".to_string());
        data.insert("mu_type".to_string(), "subscriber".to_string());
        data.insert("mu_name".to_string(), id_mu.to_string());
        data.insert("date_of_issue".to_string(), now.0.to_string());
        data.insert("issuer_id".to_string(), self.creds.id.clone());
        data.insert("issuer_name".to_string(), self.creds.id.clone());
        let body = PassportBody {
            id_mu: id_mu.to_string(),
            pass_no,
            expiry,
            data,
            master_key: master_key.clone(),
        };
        let passport = tokens::make_passport(&mut self.crypto, &self.creds.keys, &body)?;
        self.issued.insert(
            pass_no,
            IssuedPassport {
                id_mu: id_mu.to_string(),
                sc_id: sc_id.to_vec(),
                master_key: master_key.clone(),
                expiry,
                revoked: false,
            },
        );
        self.next_pass_no += 1;
        self.events.trust(id_mu, TrustLevel::Full);
        self.events.key(KeyKind::MasterMuHn, id_mu, None, &master_key);
        Ok(Registration {
            pass_no,
            passport,
            master_key,
            cert_hn: self.creds.cert.clone(),
        })
    }

    /// Verifies a relayed Visa request and vouches for both sides.
    ///
    /// Checks run in a fixed order, each with its own reject reason:
    /// timestamps, FN certificate, Passport, id_FN binding, sealed r_FN.
    pub fn handle_forward(&mut self, msg: &ForwardToHn) -> Result<HnDecision, RejectReason> {
        let now = self.clock.now();
        if now.distance(msg.t_mu) > self.freshness_window || now.distance(msg.t_fn) > self.freshness_window {
            return Err(RejectReason::Stale);
        }

        if !tokens::check_certificate(
            &mut self.crypto,
            &self.creds.ca_public_key,
            &msg.cert_fn,
            CertRole::NetworkProvider,
            now,
        ) {
            return Err(RejectReason::BadCert);
        }
        let id_fn = msg.cert_fn.subject_id.clone();

        let body = tokens::open_passport(&mut self.crypto, &self.creds.keys, &msg.passport, now)
            .map_err(|_| RejectReason::BadPassport)?;
        match self.issued.get(&body.pass_no) {
            Some(rec) if !rec.revoked && rec.id_mu == body.id_mu && rec.master_key == body.master_key => {}
            _ => return Err(RejectReason::BadPassport),
        }

        let sk_mu_hn = key_schedule::session_mu_hn(&mut self.crypto, &body.master_key, &body.id_mu, &id_fn)
            .map_err(|_| RejectReason::IdMismatch)?;
        // A challenge built for another FN was encrypted under a different
        // session key, so it fails here before the explicit comparison.
        let challenge = self
            .crypto
            .dec_sym(&sk_mu_hn, &msg.cipher_to_hn)
            .ok()
            .and_then(|pt| HnChallenge::decode(&pt).ok())
            .ok_or(RejectReason::IdMismatch)?;
        if challenge.id_fn != id_fn {
            return Err(RejectReason::IdMismatch);
        }
        if challenge.t_mu != msg.t_mu {
            return Err(RejectReason::Stale);
        }

        let r_fn = self
            .crypto
            .unseal_asym(&self.creds.keys.private_key, &msg.sealed_r_fn)
            .ok()
            .and_then(|b| <[u8; NONCE_LEN]>::try_from(b.as_slice()).ok())
            .map(Nonce::from_bytes)
            .ok_or(RejectReason::NonceMismatch)?;

        let r_mu = challenge.r_mu;
        let signature = self.crypto.sign(
            &self.creds.keys.private_key,
            &FnVerdict::signed_bytes(body.pass_no, true, &r_mu, &r_fn),
        );
        let verdict = FnVerdict {
            pass_no: body.pass_no,
            valid_mu: true,
            r_mu,
            r_fn,
            signature,
        };
        let for_fn = self
            .crypto
            .seal_asym(&msg.cert_fn.subject_public_key, &verdict.encode())
            .map_err(|_| RejectReason::BadCert)?;
        let for_mu = self.crypto.enc_sym(
            &sk_mu_hn,
            &MuVerdict {
                id_fn: id_fn.clone(),
                valid_fn: true,
                r_fn,
                r_mu,
                t_hn: now,
            }
            .encode(),
        );

        self.events.trust(&id_fn, TrustLevel::Partial);
        self.events.fresh(NonceLabel::RMu, r_mu);
        self.events.fresh(NonceLabel::RFn, r_fn);
        self.events.shared_key(&body.id_mu, KeyKind::SessionMuHn);
        self.events.key(KeyKind::SessionMuHn, &body.id_mu, None, &sk_mu_hn);
        Ok(HnDecision { for_fn, for_mu })
    }

    /// Marks a Passport revoked and builds one signed, sealed revocation per
    /// recipient `(fn_id, fn_public_key)`.
    pub fn revoke_passport(
        &mut self,
        pass_no: u64,
        known_fns: &[(String, Vec<u8>)],
    ) -> Result<Vec<(String, PassportRevoke)>, HnError> {
        let rec = self.issued.get_mut(&pass_no).ok_or(HnError::UnknownPassport(pass_no))?;
        rec.revoked = true;
        let signature = self
            .crypto
            .sign(&self.creds.keys.private_key, &PassportRevocation::signed_bytes(pass_no));
        let plaintext = PassportRevocation { pass_no, signature }.encode();
        let mut out = Vec::with_capacity(known_fns.len());
        for (fn_id, fn_pk) in known_fns {
            let sealed = self
                .crypto
                .seal_asym(fn_pk, &plaintext)
                .map_err(|e| HnError::Token(e.into()))?;
            out.push((fn_id.clone(), PassportRevoke { sealed }));
        }
        Ok(out)
    }

    /// Passport registry as text, one issued Passport per line:
    /// `pass_no id_mu sc_id_hex master_key_hex expiry TRUE|FALSE`, tab-separated.
    pub fn save_registry(&self) -> String {
        let mut out = String::new();
        for (pass_no, p) in &self.issued {
            let _ = writeln!(
                out,
                "{pass_no}\t{}\t{}\t{}\t{}\t{}",
                p.id_mu,
                hex::encode(&p.sc_id),
                p.master_key.to_hex(),
                p.expiry.0,
                if p.revoked { "TRUE" } else { "FALSE" }
            );
        }
        out
    }

    pub fn load_registry(&mut self, text: &str) -> Result<(), HnError> {
        let mut issued = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let err = |reason: &str| HnError::Registry {
                line: i + 1,
                reason: reason.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            let [pass_no, id_mu, sc_id, key, expiry, revoked] = cols.as_slice() else {
                return Err(err("expected 6 tab-separated fields"));
            };
            let key: [u8; 32] = hex::decode(key)
                .ok()
                .and_then(|k| k.try_into().ok())
                .ok_or_else(|| err("bad master key"))?;
            issued.insert(
                pass_no.parse().map_err(|_| err("bad pass_no"))?,
                IssuedPassport {
                    id_mu: id_mu.to_string(),
                    sc_id: hex::decode(sc_id).map_err(|_| err("bad sc_id"))?,
                    master_key: SymmetricKey::from_bytes(key),
                    expiry: Timestamp(expiry.parse().map_err(|_| err("bad expiry"))?),
                    revoked: match *revoked {
                        "TRUE" => true,
                        "FALSE" => false,
                        _ => return Err(err("revoked must be TRUE or FALSE")),
                    },
                },
            );
        }
        self.next_pass_no = issued.keys().next_back().map_or(1, |n| n + 1);
        self.issued = issued;
        Ok(())
    }
}
