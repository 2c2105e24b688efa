//! Foreign network: relays Visa acquisition to the user's HN, issues Visas,
//! serves requests against them, and keeps the Visa ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use thiserror::Error;

use super::{ActorEvent, Credentials, EventLog, KeyKind, NonceLabel, TrustLevel};
use crate::clock::{SimClock, DEFAULT_FRESHNESS_WINDOW_MS};
use crate::crypto::{CryptoContext, Nonce, SymmetricKey, Timestamp};
use crate::key_schedule;
use crate::tokens::{self, CertRole, Certificate, TokenError, VisaBody};
use crate::wire::{
    FnVerdict, ForwardToHn, HnDecision, KeyDelivery, PassportRevocation, PassportRevoke, RejectReason, ServiceAck,
    ServiceProof, ServiceRequest, ServiceResponse, VisaGrant, VisaRequest, VisaRevocation, VisaRevoke,
};

/// Default Visa lifetime: one day.
pub const DEFAULT_VISA_VALIDITY_MS: u64 = 86_400_000;

/// One row of the Visa ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisaRecord {
    pub pass_no: u64,
    pub visa_no: u64,
    pub expiry: Timestamp,
    pub valid: bool,
    pub first_use_seen: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("ledger line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// What the admission policy sees of a Visa request.
#[derive(Debug, Clone)]
pub struct AdmissionRequest<'a> {
    pub pass_no: u64,
    pub home_network: &'a str,
    pub descriptor: &'a str,
}

/// The FN's accept/deny trust decision for new users.
#[derive(Clone, Default)]
pub enum Policy {
    /// Admit anyone whose HN certificate verifies.
    #[default]
    AcceptAll,
    DenyAll,
    DenyList {
        home_networks: BTreeSet<String>,
        passports: BTreeSet<u64>,
    },
    Custom(Arc<dyn Fn(&AdmissionRequest<'_>) -> bool + Send + Sync>),
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::AcceptAll => f.write_str("AcceptAll"),
            Policy::DenyAll => f.write_str("DenyAll"),
            Policy::DenyList {
                home_networks,
                passports,
            } => f
                .debug_struct("DenyList")
                .field("home_networks", home_networks)
                .field("passports", passports)
                .finish(),
            Policy::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Policy {
    pub fn admits(&self, req: &AdmissionRequest<'_>) -> bool {
        match self {
            Policy::AcceptAll => true,
            Policy::DenyAll => false,
            Policy::DenyList {
                home_networks,
                passports,
            } => !home_networks.contains(req.home_network) && !passports.contains(&req.pass_no),
            Policy::Custom(f) => f(req),
        }
    }
}

/// A message with the transport address it should be delivered to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routed<T> {
    pub to: String,
    pub msg: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassportRevokeOutcome {
    /// No Visa carries the Passport; the number is remembered and ignored.
    NoVisas,
    /// This many Visas were invalidated.
    Revoked(usize),
}

#[derive(Debug, Clone)]
struct PendingVisa {
    r2_mu: Nonce,
    pass_no_claimed: u64,
    cert_hn: Certificate,
    descriptor: String,
    requester: String,
    created: Timestamp,
}

/// Per-Visa chain key, plus the previous one so that a session whose
/// response was lost can be retried once under a fresh MU nonce.
#[derive(Debug, Clone)]
struct ChainState {
    current: SymmetricKey,
    prior: Option<SymmetricKey>,
    prior_nonces: BTreeSet<Nonce>,
}

pub struct ForeignNetwork {
    creds: Credentials,
    clock: SimClock,
    freshness_window: u64,
    visa_validity: u64,
    crypto: CryptoContext,
    policy: Policy,
    pending: BTreeMap<Nonce, PendingVisa>,
    ledger: BTreeMap<u64, VisaRecord>,
    chains: BTreeMap<u64, ChainState>,
    revoked_passports: BTreeSet<u64>,
    home_networks: BTreeMap<String, Vec<u8>>,
    next_visa_no: u64,
    events: EventLog,
}

impl fmt::Debug for ForeignNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForeignNetwork")
            .field("id", &self.creds.id)
            .field("ledger", &self.ledger)
            .finish_non_exhaustive()
    }
}

impl ForeignNetwork {
    pub fn new(creds: Credentials, clock: SimClock, crypto: CryptoContext) -> Self {
        Self {
            creds,
            clock,
            freshness_window: DEFAULT_FRESHNESS_WINDOW_MS,
            visa_validity: DEFAULT_VISA_VALIDITY_MS,
            crypto,
            policy: Policy::default(),
            pending: BTreeMap::new(),
            ledger: BTreeMap::new(),
            chains: BTreeMap::new(),
            revoked_passports: BTreeSet::new(),
            home_networks: BTreeMap::new(),
            next_visa_no: 1,
            events: EventLog::default(),
        }
    }

    pub fn with_freshness_window(mut self, ms: u64) -> Self {
        self.freshness_window = ms;
        self
    }

    pub fn with_visa_validity(mut self, ms: u64) -> Self {
        self.visa_validity = ms;
        self
    }

    pub fn set_policy(&mut self, policy: Policy) {
        self.policy = policy;
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

    pub fn ledger(&self) -> &BTreeMap<u64, VisaRecord> {
        &self.ledger
    }

    pub fn revoked_passports(&self) -> &BTreeSet<u64> {
        &self.revoked_passports
    }

    pub fn chain_key(&self, visa_no: u64) -> Option<&SymmetricKey> {
        self.chains.get(&visa_no).map(|c| &c.current)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn drain_events(&mut self) -> Vec<ActorEvent> {
        self.events.drain()
    }

    /// Registers an HN whose signed revocations this FN will honour. The
    /// certificate must verify under the CA as an identity provider.
    pub fn learn_home_network(&mut self, cert: &Certificate) -> bool {
        let ok = tokens::check_certificate(
            &mut self.crypto,
            &self.creds.ca_public_key,
            cert,
            CertRole::IdentityProvider,
            self.clock.now(),
        );
        if ok {
            self.home_networks
                .insert(cert.subject_id.clone(), cert.subject_public_key.clone());
        }
        ok
    }

    /// Ledger/chain-key coupling: a chain key exists iff its Visa is valid.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (visa_no, rec) in &self.ledger {
            if rec.visa_no != *visa_no {
                return Err(format!("ledger row {visa_no} carries visa_no {}", rec.visa_no));
            }
            if rec.valid != self.chains.contains_key(visa_no) {
                return Err(format!(
                    "visa {visa_no}: valid={} but chain key present={}",
                    rec.valid,
                    self.chains.contains_key(visa_no)
                ));
            }
        }
        if let Some(orphan) = self.chains.keys().find(|v| !self.ledger.contains_key(v)) {
            return Err(format!("chain key for unknown visa {orphan}"));
        }
        Ok(())
    }

    fn purge_pending(&mut self, now: Timestamp) {
        let window = self.freshness_window;
        self.pending.retain(|_, p| now.distance(p.created) <= window);
    }

    /// Checks the request and relays it to the user's HN, adding this FN's
    /// certificate, a timestamp, and a fresh nonce sealed for the HN.
    ///
    /// `requester` is the transport address the eventual grant goes back to.
    pub fn handle_visa_request(
        &mut self,
        msg: &VisaRequest,
        requester: &str,
    ) -> Result<Routed<ForwardToHn>, RejectReason> {
        let now = self.clock.now();
        self.purge_pending(now);
        if now.distance(msg.t_mu) > self.freshness_window {
            return Err(RejectReason::Stale);
        }
        if !tokens::check_certificate(
            &mut self.crypto,
            &self.creds.ca_public_key,
            &msg.cert_hn,
            CertRole::IdentityProvider,
            now,
        ) {
            return Err(RejectReason::BadCert);
        }
        let hn_id = msg.cert_hn.subject_id.clone();
        self.home_networks
            .insert(hn_id.clone(), msg.cert_hn.subject_public_key.clone());
        self.events.trust(&hn_id, TrustLevel::Partial);

        if self.revoked_passports.contains(&msg.pass_no) {
            return Err(RejectReason::Revoked);
        }
        let admission = AdmissionRequest {
            pass_no: msg.pass_no,
            home_network: &hn_id,
            descriptor: &msg.descriptor,
        };
        if !self.policy.admits(&admission) {
            return Err(RejectReason::PolicyDenied);
        }

        let r_fn = self.crypto.fresh_nonce();
        let sealed_r_fn = self
            .crypto
            .seal_asym(&msg.cert_hn.subject_public_key, r_fn.as_bytes())
            .map_err(|_| RejectReason::BadCert)?;
        self.pending.insert(
            r_fn,
            PendingVisa {
                r2_mu: msg.r2_mu,
                pass_no_claimed: msg.pass_no,
                cert_hn: msg.cert_hn.clone(),
                descriptor: msg.descriptor.clone(),
                requester: requester.to_string(),
                created: now,
            },
        );
        Ok(Routed {
            to: hn_id,
            msg: ForwardToHn {
                passport: msg.passport.clone(),
                cipher_to_hn: msg.cipher_to_hn.clone(),
                t_mu: msg.t_mu,
                cert_fn: self.creds.cert.clone(),
                t_fn: now,
                sealed_r_fn,
            },
        })
    }

    /// Consumes the HN's verdict and, if it vouches for the user, issues a
    /// Visa and delivers its master key under SK_MU-FN.
    pub fn handle_hn_decision(&mut self, msg: &HnDecision) -> Result<Routed<VisaGrant>, RejectReason> {
        let now = self.clock.now();
        self.purge_pending(now);
        let verdict = self
            .crypto
            .unseal_asym(&self.creds.keys.private_key, &msg.for_fn)
            .ok()
            .and_then(|pt| FnVerdict::decode(&pt).ok())
            .ok_or(RejectReason::BadSignature)?;
        let pending = self
            .pending
            .get(&verdict.r_fn)
            .cloned()
            .ok_or(RejectReason::NonceMismatch)?;
        if !self.crypto.verify(
            &pending.cert_hn.subject_public_key,
            &verdict.to_be_signed(),
            &verdict.signature,
        ) {
            return Err(RejectReason::BadSignature);
        }
        if verdict.pass_no != pending.pass_no_claimed || !verdict.valid_mu {
            return Err(RejectReason::InvalidUser);
        }
        if self.revoked_passports.contains(&verdict.pass_no) {
            return Err(RejectReason::Revoked);
        }
        self.pending.remove(&verdict.r_fn);

        let pass_no = verdict.pass_no;
        let visa_master = self.crypto.random_key();
        let r2_fn = self.crypto.fresh_nonce();
        let sk_mu_fn = key_schedule::session_mu_fn(
            &mut self.crypto,
            pass_no,
            &self.creds.id,
            &verdict.r_mu,
            &verdict.r_fn,
            &pending.r2_mu,
            &r2_fn,
        )
        .expect("non-empty kdf parts");

        let visa_no = self.next_visa_no;
        self.next_visa_no += 1;
        let expiry = now.plus(self.visa_validity);
        let mut data = BTreeMap::new();
        data.insert("visa_type".to_string(), "service".to_string());
        data.insert("number_of_access".to_string(), "unlimited".to_string());
        data.insert("duration_of_access".to_string(), self.visa_validity.to_string());
        data.insert("issuer_place".to_string(), self.creds.id.clone());
        data.insert("issuer_id".to_string(), self.creds.id.clone());
        data.insert("issuer_name".to_string(), self.creds.id.clone());
        data.insert("issued_time".to_string(), now.0.to_string());
        data.insert("service_type".to_string(), "network-access".to_string());
        data.insert("service_name".to_string(), pending.descriptor.clone());
        data.insert("times_of_access".to_string(), "0".to_string());
        let body = VisaBody {
            pass_no,
            visa_no,
            expiry,
            data,
            master_key: visa_master.clone(),
        };
        let visa = tokens::make_visa(&mut self.crypto, &self.creds.keys, &body).map_err(|_| RejectReason::BadVisa)?;

        // The ledger row is written before the Visa leaves the FN.
        self.ledger.insert(
            visa_no,
            VisaRecord {
                pass_no,
                visa_no,
                expiry,
                valid: true,
                first_use_seen: false,
            },
        );
        self.chains.insert(
            visa_no,
            ChainState {
                current: sk_mu_fn.clone(),
                prior: None,
                prior_nonces: BTreeSet::new(),
            },
        );
        let key_delivery = self.crypto.enc_sym(
            &sk_mu_fn,
            &KeyDelivery {
                master_key: visa_master.clone(),
                visa_no,
                expiry,
            }
            .encode(),
        );

        let peer = pending.requester.clone();
        self.events.fresh(NonceLabel::RMu, verdict.r_mu);
        self.events.fresh(NonceLabel::RFn, verdict.r_fn);
        self.events.fresh(NonceLabel::R2Mu, pending.r2_mu);
        self.events.fresh(NonceLabel::R2Fn, r2_fn);
        self.events.shared_key(&peer, KeyKind::MasterMuFn);
        self.events.shared_key(&peer, KeyKind::SessionMuFn);
        self.events.key(KeyKind::MasterMuFn, &peer, Some(visa_no), &visa_master);
        self.events.key(KeyKind::SessionMuFn, &peer, Some(visa_no), &sk_mu_fn);
        self.events.trust(&peer, TrustLevel::Partial);

        Ok(Routed {
            to: peer,
            msg: VisaGrant {
                visa,
                for_mu: msg.for_mu.clone(),
                key_delivery,
                r2_fn,
            },
        })
    }

    /// Validates a Visa and the MU's proof of knowledge, then runs one
    /// service session: derives the three per-session keys, returns
    /// `service_bytes` under the third, and advances the chain key.
    pub fn handle_service_request(
        &mut self,
        msg: &ServiceRequest,
        service_bytes: &[u8],
        requester: &str,
    ) -> Result<ServiceResponse, RejectReason> {
        let now = self.clock.now();
        let body = tokens::open_visa(&mut self.crypto, &self.creds.keys, &msg.visa, now).map_err(|e| match e {
            TokenError::Expired => RejectReason::Expired,
            _ => RejectReason::BadVisa,
        })?;
        let visa_no = body.visa_no;
        let pass_no = body.pass_no;
        let record = self.ledger.get(&visa_no).ok_or(RejectReason::BadVisa)?;
        if record.pass_no != pass_no {
            return Err(RejectReason::BadVisa);
        }
        if !record.valid || self.revoked_passports.contains(&pass_no) {
            return Err(RejectReason::Revoked);
        }
        if record.expiry < now {
            return Err(RejectReason::Expired);
        }
        let chain = self.chains.get(&visa_no).cloned().ok_or(RejectReason::Revoked)?;

        let attempt = |crypto: &mut CryptoContext, chain_key: &SymmetricKey| -> Option<(SymmetricKey, Nonce)> {
            let sk1 = key_schedule::service_first(crypto, chain_key, visa_no, pass_no).ok()?;
            let proof = ServiceProof::decode(&crypto.dec_sym(&sk1, &msg.cipher1).ok()?).ok()?;
            (proof.visa_no == visa_no).then_some((sk1, proof.r1_mu))
        };
        let (sk1, r1_mu, retried) = if let Some((sk1, r1)) = attempt(&mut self.crypto, &chain.current) {
            (sk1, r1, false)
        } else {
            match &chain.prior {
                Some(prior) => match attempt(&mut self.crypto, prior) {
                    Some((sk1, r1)) if !chain.prior_nonces.contains(&r1) => (sk1, r1, true),
                    _ => return Err(RejectReason::BadProof),
                },
                None => return Err(RejectReason::BadProof),
            }
        };

        let sk2 = key_schedule::service_second(&mut self.crypto, &sk1, &body.master_key, &r1_mu)
            .expect("non-empty kdf parts");
        let r1_fn = self.crypto.fresh_nonce();
        let sk3 = key_schedule::service_third(&mut self.crypto, &sk2, &sk1, &r1_fn).expect("non-empty kdf parts");
        let cipher2 = self.crypto.enc_sym(&sk2, &ServiceAck { r1_fn, pass_no }.encode());
        let payload = self.crypto.enc_sym(&sk3, service_bytes);

        let state = self.chains.get_mut(&visa_no).expect("checked above");
        if retried {
            state.prior_nonces.insert(r1_mu);
        } else {
            state.prior = Some(std::mem::replace(&mut state.current, sk3.clone()));
            state.prior_nonces = BTreeSet::from([r1_mu]);
        }
        state.current = sk3.clone();
        if let Some(rec) = self.ledger.get_mut(&visa_no) {
            rec.first_use_seen = true;
        }

        self.events.fresh(NonceLabel::R1Mu, r1_mu);
        self.events.fresh(NonceLabel::R1Fn, r1_fn);
        self.events.key(KeyKind::ServiceFirst, requester, Some(visa_no), &sk1);
        self.events.key(KeyKind::ServiceSecond, requester, Some(visa_no), &sk2);
        self.events.key(KeyKind::ServiceThird, requester, Some(visa_no), &sk3);
        self.events.shared_key(requester, KeyKind::ServiceSecond);
        self.events.shared_key(requester, KeyKind::ServiceThird);
        Ok(ServiceResponse { cipher2, payload })
    }

    fn invalidate(&mut self, visa_no: u64) {
        if let Some(rec) = self.ledger.get_mut(&visa_no) {
            rec.valid = false;
        }
        self.chains.remove(&visa_no);
    }

    /// Applies an HN-signed Passport revocation. Unsigned or undecryptable
    /// messages are dropped without touching the ledger.
    pub fn handle_passport_revoke(&mut self, msg: &PassportRevoke) -> Result<PassportRevokeOutcome, TokenError> {
        let pt = self.crypto.unseal_asym(&self.creds.keys.private_key, &msg.sealed)?;
        let revocation = PassportRevocation::decode(&pt)?;
        let signed = PassportRevocation::signed_bytes(revocation.pass_no);
        let keys: Vec<Vec<u8>> = self.home_networks.values().cloned().collect();
        if !keys
            .iter()
            .any(|pk| self.crypto.verify(pk, &signed, &revocation.signature))
        {
            return Err(TokenError::BadSignature);
        }
        let pass_no = revocation.pass_no;
        self.revoked_passports.insert(pass_no);
        let affected: Vec<u64> = self
            .ledger
            .values()
            .filter(|r| r.pass_no == pass_no)
            .map(|r| r.visa_no)
            .collect();
        if affected.is_empty() {
            return Ok(PassportRevokeOutcome::NoVisas);
        }
        for visa_no in &affected {
            self.invalidate(*visa_no);
        }
        Ok(PassportRevokeOutcome::Revoked(affected.len()))
    }

    /// Applies an MU-originated Visa revocation. The outer layer must open
    /// under the Visa's chain key and the inner layer under the SK′ derived
    /// from it; both must state the same `(Pass_No, Visa_No)`.
    pub fn handle_visa_revoke(&mut self, msg: &VisaRevoke) -> Result<(), RejectReason> {
        let visa_no = msg.visa_no;
        let pass_no = self.ledger.get(&visa_no).ok_or(RejectReason::BadRevoke)?.pass_no;
        let chain = self.chains.get(&visa_no).cloned().ok_or(RejectReason::BadRevoke)?;
        let candidates = std::iter::once(chain.current).chain(chain.prior);
        for chain_key in candidates {
            let Ok(outer) = self.crypto.dec_sym(&chain_key, &msg.body) else {
                continue;
            };
            let Ok(outer) = VisaRevocation::decode(&outer) else {
                continue;
            };
            if outer.visa_no != visa_no || outer.pass_no != pass_no {
                continue;
            }
            let sk1 = key_schedule::service_first(&mut self.crypto, &chain_key, visa_no, pass_no)
                .expect("non-empty kdf parts");
            let inner = self
                .crypto
                .dec_sym(&sk1, &outer.inner)
                .ok()
                .and_then(|pt| VisaRevocation::parse_statement(&pt).ok());
            if inner == Some((pass_no, visa_no)) {
                self.invalidate(visa_no);
                return Ok(());
            }
        }
        Err(RejectReason::BadRevoke)
    }

    /// Ledger as text: one row per Visa, tab-separated
    /// `Pass_No Visa_No expiry valid first_use`, booleans as TRUE/FALSE.
    pub fn save_ledger(&self) -> String {
        let mut out = String::new();
        for r in self.ledger.values() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.pass_no,
                r.visa_no,
                r.expiry.0,
                flag(r.valid),
                flag(r.first_use_seen)
            );
        }
        out
    }

    /// Replaces the ledger from [`save_ledger`](Self::save_ledger) text.
    /// Chain keys are not persisted, so loaded rows are marked invalid unless
    /// this FN still holds their chain key.
    pub fn load_ledger(&mut self, text: &str) -> Result<(), LedgerError> {
        let mut ledger = parse_ledger(text)?;
        for rec in ledger.values_mut() {
            if !self.chains.contains_key(&rec.visa_no) {
                rec.valid = false;
            }
        }
        self.chains.retain(|v, _| ledger.get(v).is_some_and(|r| r.valid));
        self.next_visa_no = self.next_visa_no.max(ledger.keys().next_back().map_or(1, |v| v + 1));
        self.ledger = ledger;
        Ok(())
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "TRUE"
    } else {
        "FALSE"
    }
}

/// Parses ledger text produced by [`ForeignNetwork::save_ledger`].
pub fn parse_ledger(text: &str) -> Result<BTreeMap<u64, VisaRecord>, LedgerError> {
    let mut ledger = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let err = |reason: &str| LedgerError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        let parse_flag = |s: &str| match s {
            "TRUE" => Ok(true),
            "FALSE" => Ok(false),
            _ => Err(err("flag must be TRUE or FALSE")),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let [pass_no, visa_no, expiry, valid, first_use] = cols.as_slice() else {
            return Err(err("expected 5 tab-separated fields"));
        };
        let rec = VisaRecord {
            pass_no: pass_no.parse().map_err(|_| err("bad Pass_No"))?,
            visa_no: visa_no.parse().map_err(|_| err("bad Visa_No"))?,
            expiry: Timestamp(expiry.parse().map_err(|_| err("bad expiry"))?),
            valid: parse_flag(valid)?,
            first_use_seen: parse_flag(first_use)?,
        };
        if ledger.insert(rec.visa_no, rec).is_some() {
            return Err(err("duplicate Visa_No"));
        }
    }
    Ok(ledger)
}

/// Renders ledger rows in the same format as [`ForeignNetwork::save_ledger`].
pub fn render_ledger(ledger: &BTreeMap<u64, VisaRecord>) -> String {
    ledger
        .values()
        .map(|r| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.pass_no,
                r.visa_no,
                r.expiry.0,
                flag(r.valid),
                flag(r.first_use_seen)
            )
        })
        .collect()
}
