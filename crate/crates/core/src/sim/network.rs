//! The message bus and the actors attached to it.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::audit::{AuditFinding, TrustAudit};
use super::provision::{self, ProvisionError};
use super::trace::{Trace, TraceEntry};
use crate::actors::foreign_network::{ForeignNetwork, PassportRevokeOutcome, Policy};
use crate::actors::home_network::{HnError, HomeNetwork};
use crate::actors::mobile_user::{MobileUser, MuError, SmartCard};
use crate::actors::{ActorEvent, Credentials};
use crate::clock::{SimClock, DEFAULT_FRESHNESS_WINDOW_MS};
use crate::crypto::{CryptoContext, CryptoSuite, KeyPair, Timestamp};
use crate::tokens::{self, CertRole};
use crate::wire::{ProtocolMessage, RejectReason};

/// Lifetime of certificates issued by the simulated CA: ten years.
pub const CERT_VALIDITY_MS: u64 = 315_360_000_000;
/// Default Passport lifetime at registration: one year.
pub const DEFAULT_PASSPORT_VALIDITY_MS: u64 = 31_536_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no actor named {0:?}")]
    UnknownActor(String),
    #[error("actor {name:?} is not a {expected}")]
    WrongRole { name: String, expected: &'static str },
    #[error("actor {0:?} declared twice")]
    DuplicateActor(String),
    #[error("a CA must be declared before networks")]
    NoCa,
    #[error("the message queue is empty")]
    EmptyQueue,
    #[error("no captured message #{0}")]
    NoSuchMessage(usize),
    #[error("tamper index {index} out of range for a {len}-byte message")]
    TamperOutOfRange { index: usize, len: usize },
    #[error("{mu} holds no visa from {fn_id}")]
    NoVisa { mu: String, fn_id: String },
    #[error("{0} has no smart card")]
    NotRegistered(String),
    #[error("mobile user: {0}")]
    Mobile(#[from] MuError),
    #[error("home network: {0}")]
    Home(#[from] HnError),
    #[error("provisioning: {0}")]
    Provision(#[from] ProvisionError),
    #[error("delivery limit of {0} messages reached")]
    DeliveryLimit(usize),
}

/// A queued message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    /// Index of the captured message in the trace.
    pub index: usize,
    pub from: String,
    pub to: String,
    pub bytes: Vec<u8>,
}

/// What happened when one message reached its recipient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub index: usize,
    pub to: String,
    /// A short description on acceptance, or the reject reason.
    pub outcome: Result<String, String>,
}

impl Delivery {
    pub fn accepted(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn reason(&self) -> Option<&str> {
        self.outcome.as_ref().err().map(String::as_str)
    }
}

/// A service payload as sent by an FN and as received by the MU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceReceipt {
    pub mu: String,
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
}

impl ServiceReceipt {
    pub fn intact(&self) -> bool {
        self.sent == self.received
    }
}

/// A bus participant that only records what reaches it.
#[derive(Debug)]
pub struct AttackerNode {
    pub keys: KeyPair,
    pub crypto: CryptoContext,
    pub captured: Vec<Vec<u8>>,
}

#[derive(Debug)]
pub enum Node {
    Home(Box<HomeNetwork>),
    Foreign(Box<ForeignNetwork>),
    Mobile(Box<MobileUser>),
    Attacker(Box<AttackerNode>),
}

impl Node {
    fn drain_events(&mut self) -> Vec<ActorEvent> {
        match self {
            Node::Home(a) => a.drain_events(),
            Node::Foreign(a) => a.drain_events(),
            Node::Mobile(a) => a.drain_events(),
            Node::Attacker(_) => Vec::new(),
        }
    }

    fn crypto(&self) -> &CryptoContext {
        match self {
            Node::Home(a) => a.crypto(),
            Node::Foreign(a) => a.crypto(),
            Node::Mobile(a) => a.crypto(),
            Node::Attacker(a) => &a.crypto,
        }
    }
}

#[derive(Debug)]
struct Authority {
    id: String,
    keys: KeyPair,
    crypto: CryptoContext,
}

/// Deterministic simulated network.
///
/// Every actor's randomness is seeded from the network seed in declaration
/// order, the clock moves only when told to, and messages move only when a
/// step delivers them, so a run is a pure function of its seed and steps.
pub struct SimNet {
    suite: Arc<dyn CryptoSuite>,
    seeds: ChaCha20Rng,
    clock: SimClock,
    freshness_window: u64,
    ca: Option<Authority>,
    nodes: BTreeMap<String, Node>,
    home_of: BTreeMap<String, String>,
    queue: VecDeque<Envelope>,
    trace: Trace,
    audit: TrustAudit,
    last: Option<Delivery>,
    violations: Vec<String>,
    valid_seen: BTreeMap<(String, u64), bool>,
    service_counter: u64,
    pending_service: BTreeMap<String, Vec<u8>>,
    receipts: Vec<ServiceReceipt>,
}

impl std::fmt::Debug for SimNet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimNet")
            .field("suite", &self.suite.name())
            .field("now", &self.clock.now())
            .field("nodes", &self.nodes)
            .field("queued", &self.queue.len())
            .finish_non_exhaustive()
    }
}

impl SimNet {
    pub fn new(seed: u64, suite: Arc<dyn CryptoSuite>) -> Self {
        Self {
            suite,
            seeds: ChaCha20Rng::seed_from_u64(seed),
            clock: SimClock::new(),
            freshness_window: DEFAULT_FRESHNESS_WINDOW_MS,
            ca: None,
            nodes: BTreeMap::new(),
            home_of: BTreeMap::new(),
            queue: VecDeque::new(),
            trace: Trace::default(),
            audit: TrustAudit::default(),
            last: None,
            violations: Vec::new(),
            valid_seen: BTreeMap::new(),
            service_counter: 0,
            pending_service: BTreeMap::new(),
            receipts: Vec::new(),
        }
    }

    pub fn with_standard_suite(seed: u64) -> Self {
        Self::new(seed, Arc::new(crate::crypto::StandardSuite))
    }

    fn next_crypto(&mut self) -> CryptoContext {
        CryptoContext::new(self.suite.clone(), self.seeds.next_u64())
    }

    fn claim_name(&self, name: &str) -> Result<(), SimError> {
        let taken = self.nodes.contains_key(name) || self.ca.as_ref().is_some_and(|c| c.id == name);
        if taken {
            Err(SimError::DuplicateActor(name.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn audit(&self) -> &TrustAudit {
        &self.audit
    }

    pub fn last_delivery(&self) -> Option<&Delivery> {
        self.last.as_ref()
    }

    pub fn queue(&self) -> &VecDeque<Envelope> {
        &self.queue
    }

    /// Invariant breaches noticed after any step.
    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn receipts(&self) -> &[ServiceReceipt] {
        &self.receipts
    }

    pub fn ca_keys(&self) -> Option<&KeyPair> {
        self.ca.as_ref().map(|c| &c.keys)
    }

    pub fn ca_public_key(&self) -> Option<&[u8]> {
        self.ca.as_ref().map(|c| c.keys.public_key.as_slice())
    }

    pub fn actor_names(&self) -> Vec<String> {
        self.nodes.keys().cloned().collect()
    }

    pub fn add_ca(&mut self, name: &str) -> Result<(), SimError> {
        self.claim_name(name)?;
        let mut crypto = self.next_crypto();
        let keys = crypto.generate_keypair(name);
        self.ca = Some(Authority {
            id: name.to_string(),
            keys,
            crypto,
        });
        Ok(())
    }

    fn issue_credentials(&mut self, name: &str, role: CertRole) -> Result<(Credentials, CryptoContext), SimError> {
        self.claim_name(name)?;
        let mut crypto = self.next_crypto();
        let keys = crypto.generate_keypair(name);
        let expiry = self.clock.now().plus(CERT_VALIDITY_MS);
        let ca = self.ca.as_mut().ok_or(SimError::NoCa)?;
        let cert = tokens::issue_certificate(&mut ca.crypto, &ca.keys, name, &keys.public_key, role, expiry);
        let creds = Credentials {
            id: name.to_string(),
            keys,
            cert,
            ca_public_key: ca.keys.public_key.clone(),
        };
        Ok((creds, crypto))
    }

    pub fn add_home(&mut self, name: &str) -> Result<(), SimError> {
        let (creds, crypto) = self.issue_credentials(name, CertRole::IdentityProvider)?;
        self.insert_home(creds, crypto, None)
    }

    pub(crate) fn insert_home(
        &mut self,
        creds: Credentials,
        crypto: CryptoContext,
        registry: Option<&str>,
    ) -> Result<(), SimError> {
        let name = creds.id.clone();
        let cert = creds.cert.clone();
        let mut hn = HomeNetwork::new(creds, self.clock.clone(), crypto).with_freshness_window(self.freshness_window);
        if let Some(text) = registry {
            hn.load_registry(text)?;
        }
        self.nodes.insert(name, Node::Home(Box::new(hn)));
        // The HN directory: every FN learns every HN's certificate.
        for node in self.nodes.values_mut() {
            if let Node::Foreign(f) = node {
                f.learn_home_network(&cert);
            }
        }
        Ok(())
    }

    pub fn add_foreign(&mut self, name: &str) -> Result<(), SimError> {
        let (creds, crypto) = self.issue_credentials(name, CertRole::NetworkProvider)?;
        self.insert_foreign(creds, crypto);
        Ok(())
    }

    pub(crate) fn insert_foreign(&mut self, creds: Credentials, crypto: CryptoContext) {
        let name = creds.id.clone();
        let mut fnet =
            ForeignNetwork::new(creds, self.clock.clone(), crypto).with_freshness_window(self.freshness_window);
        for node in self.nodes.values() {
            if let Node::Home(h) = node {
                fnet.learn_home_network(&h.credentials().cert);
            }
        }
        self.nodes.insert(name, Node::Foreign(Box::new(fnet)));
    }

    pub fn add_mobile(&mut self, name: &str, home: &str) -> Result<(), SimError> {
        self.claim_name(name)?;
        self.home(home)?;
        let crypto = self.next_crypto();
        let mu = MobileUser::new(name, self.clock.clone(), crypto).with_freshness_window(self.freshness_window);
        self.nodes.insert(name.to_string(), Node::Mobile(Box::new(mu)));
        self.home_of.insert(name.to_string(), home.to_string());
        Ok(())
    }

    pub(crate) fn insert_mobile(&mut self, name: &str, home: &str, card: SmartCard) -> Result<(), SimError> {
        self.add_mobile(name, home)?;
        self.mobile_mut(name)?.provision(card);
        Ok(())
    }

    pub fn add_attacker(&mut self, name: &str) -> Result<(), SimError> {
        self.claim_name(name)?;
        let mut crypto = self.next_crypto();
        let keys = crypto.generate_keypair(name);
        self.nodes.insert(
            name.to_string(),
            Node::Attacker(Box::new(AttackerNode {
                keys,
                crypto,
                captured: Vec::new(),
            })),
        );
        Ok(())
    }

    /// Loads the actors written by [`provision::provision`] from `dir`.
    pub fn load_provisioned(&mut self, dir: &Path) -> Result<(), SimError> {
        let loaded = provision::load(dir)?;
        self.claim_name(&loaded.ca_name)?;
        let crypto = self.next_crypto();
        self.ca = Some(Authority {
            id: loaded.ca_name,
            keys: loaded.ca_keys,
            crypto,
        });
        for (creds, registry) in loaded.homes {
            self.claim_name(&creds.id)?;
            let crypto = self.next_crypto();
            self.insert_home(creds, crypto, Some(&registry))?;
        }
        for creds in loaded.foreigns {
            self.claim_name(&creds.id)?;
            let crypto = self.next_crypto();
            self.insert_foreign(creds, crypto);
        }
        for (name, home, card) in loaded.mobiles {
            self.insert_mobile(&name, &home, card)?;
        }
        Ok(())
    }

    fn node(&self, name: &str) -> Result<&Node, SimError> {
        self.nodes
            .get(name)
            .ok_or_else(|| SimError::UnknownActor(name.to_string()))
    }

    fn node_mut(&mut self, name: &str) -> Result<&mut Node, SimError> {
        self.nodes
            .get_mut(name)
            .ok_or_else(|| SimError::UnknownActor(name.to_string()))
    }

    fn wrong(name: &str, expected: &'static str) -> SimError {
        SimError::WrongRole {
            name: name.to_string(),
            expected,
        }
    }

    pub fn home(&self, name: &str) -> Result<&HomeNetwork, SimError> {
        match self.node(name)? {
            Node::Home(h) => Ok(h),
            _ => Err(Self::wrong(name, "home network")),
        }
    }

    pub fn home_mut(&mut self, name: &str) -> Result<&mut HomeNetwork, SimError> {
        match self.node_mut(name)? {
            Node::Home(h) => Ok(h),
            _ => Err(Self::wrong(name, "home network")),
        }
    }

    pub fn foreign(&self, name: &str) -> Result<&ForeignNetwork, SimError> {
        match self.node(name)? {
            Node::Foreign(f) => Ok(f),
            _ => Err(Self::wrong(name, "foreign network")),
        }
    }

    pub fn foreign_mut(&mut self, name: &str) -> Result<&mut ForeignNetwork, SimError> {
        match self.node_mut(name)? {
            Node::Foreign(f) => Ok(f),
            _ => Err(Self::wrong(name, "foreign network")),
        }
    }

    pub fn mobile(&self, name: &str) -> Result<&MobileUser, SimError> {
        match self.node(name)? {
            Node::Mobile(m) => Ok(m),
            _ => Err(Self::wrong(name, "mobile user")),
        }
    }

    pub fn mobile_mut(&mut self, name: &str) -> Result<&mut MobileUser, SimError> {
        match self.node_mut(name)? {
            Node::Mobile(m) => Ok(m),
            _ => Err(Self::wrong(name, "mobile user")),
        }
    }

    pub fn attacker(&self, name: &str) -> Result<&AttackerNode, SimError> {
        match self.node(name)? {
            Node::Attacker(a) => Ok(a),
            _ => Err(Self::wrong(name, "attacker")),
        }
    }

    pub fn attacker_mut(&mut self, name: &str) -> Result<&mut AttackerNode, SimError> {
        match self.node_mut(name)? {
            Node::Attacker(a) => Ok(a),
            _ => Err(Self::wrong(name, "attacker")),
        }
    }

    pub fn set_policy(&mut self, fn_id: &str, policy: Policy) -> Result<(), SimError> {
        self.foreign_mut(fn_id)?.set_policy(policy);
        Ok(())
    }

    // ---- event plumbing ----

    pub(crate) fn collect_events(&mut self) {
        let now = self.clock.now();
        let mut drained = Vec::new();
        for (name, node) in self.nodes.iter_mut() {
            for event in node.drain_events() {
                drained.push((name.clone(), event));
            }
        }
        for (actor, event) in drained {
            let findings = self.audit.observe(&actor, &event);
            self.trace.push(now, TraceEntry::Event { actor, event });
            for finding in findings {
                let entry = match finding {
                    AuditFinding::Trust { from, to, level } => TraceEntry::Trust { from, to, level },
                    AuditFinding::Session(s) => TraceEntry::Session(s),
                };
                self.trace.push(now, entry);
            }
        }
        for (name, node) in &self.nodes {
            let used = node.crypto().traffic_keys();
            if !used.is_empty() {
                self.trace
                    .traffic_keys
                    .entry(name.clone())
                    .or_default()
                    .extend(used.iter().cloned());
            }
        }
        self.check_invariants();
    }

    fn check_invariants(&mut self) {
        let now = self.clock.now();
        let mut found = Vec::new();
        for (name, node) in &self.nodes {
            let Node::Foreign(f) = node else { continue };
            if let Err(e) = f.check_invariants() {
                found.push(format!("{name}: {e}"));
            }
            for rec in f.ledger().values() {
                let key = (name.clone(), rec.visa_no);
                if let Some(prev) = self.valid_seen.insert(key, rec.valid) {
                    if !prev && rec.valid {
                        found.push(format!("{name}: visa {} became valid again", rec.visa_no));
                    }
                }
            }
        }
        for v in found {
            self.trace
                .push(now, TraceEntry::Note(format!("invariant violated: {v}")));
            self.violations.push(v);
        }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        let now = self.clock.now();
        self.trace.push(now, TraceEntry::Note(text.into()));
    }

    pub(crate) fn record(&mut self, entry: TraceEntry) {
        let now = self.clock.now();
        self.trace.push(now, entry);
    }

    // ---- sending ----

    /// Captures raw bytes and queues them for delivery.
    pub fn inject(&mut self, from: &str, to: &str, bytes: Vec<u8>) -> usize {
        let index = self.trace.capture(self.clock.now(), from, to, bytes.clone());
        self.queue.push_back(Envelope {
            index,
            from: from.to_string(),
            to: to.to_string(),
            bytes,
        });
        index
    }

    pub fn send(&mut self, from: &str, to: &str, msg: &ProtocolMessage) -> usize {
        self.inject(from, to, msg.encode())
    }

    /// Offline registration of `mu` with its home network.
    pub fn register(&mut self, mu: &str, validity_ms: u64) -> Result<u64, SimError> {
        let home = self
            .home_of
            .get(mu)
            .cloned()
            .ok_or_else(|| Self::wrong(mu, "mobile user"))?;
        let mut sc_id = vec![0u8; 16];
        let mut biometric = vec![0u8; 32];
        self.seeds.fill_bytes(&mut sc_id);
        self.seeds.fill_bytes(&mut biometric);
        let reg = self
            .home_mut(&home)?
            .register_mobile_user(mu, &sc_id, &biometric, validity_ms)?;
        let card = SmartCard {
            sc_id,
            master_key: reg.master_key,
            passport: reg.passport,
            pass_no: reg.pass_no,
            cert_hn: reg.cert_hn,
        };
        self.mobile_mut(mu)?.provision(card);
        self.note(format!("{mu} registered with {home} as passport {}", reg.pass_no));
        self.collect_events();
        Ok(reg.pass_no)
    }

    /// Has `mu` ask `fn_id` for a Visa; the request is queued.
    pub fn request_visa(&mut self, mu: &str, fn_id: &str, descriptor: &str) -> Result<usize, SimError> {
        self.foreign(fn_id)?;
        let req = self.mobile_mut(mu)?.begin_visa_acquisition(fn_id, descriptor)?;
        let index = self.send(mu, fn_id, &ProtocolMessage::VisaRequest(req));
        self.collect_events();
        Ok(index)
    }

    /// Has `mu` open a service session on its latest Visa from `fn_id`.
    pub fn request_service(&mut self, mu: &str, fn_id: &str, descriptor: &str) -> Result<usize, SimError> {
        let visa_no = self.latest_visa(mu, fn_id)?;
        let req = self.mobile_mut(mu)?.begin_service(fn_id, visa_no, descriptor)?;
        let index = self.send(mu, fn_id, &ProtocolMessage::ServiceRequest(req));
        self.collect_events();
        Ok(index)
    }

    pub fn latest_visa(&self, mu: &str, fn_id: &str) -> Result<u64, SimError> {
        self.mobile(mu)?
            .latest_visa_from(fn_id)
            .ok_or_else(|| SimError::NoVisa {
                mu: mu.to_string(),
                fn_id: fn_id.to_string(),
            })
    }

    /// Has `hn` revoke `mu`'s Passport and notify every FN.
    pub fn revoke_passport(&mut self, hn: &str, mu: &str) -> Result<Vec<usize>, SimError> {
        let pass_no = self
            .mobile(mu)?
            .smart_card()
            .map(|c| c.pass_no)
            .ok_or_else(|| SimError::NotRegistered(mu.to_string()))?;
        let fns: Vec<(String, Vec<u8>)> = self
            .nodes
            .values()
            .filter_map(|n| match n {
                Node::Foreign(f) => Some((f.id().to_string(), f.credentials().keys.public_key.clone())),
                _ => None,
            })
            .collect();
        let notices = self.home_mut(hn)?.revoke_passport(pass_no, &fns)?;
        let mut sent = Vec::new();
        for (fn_id, notice) in notices {
            sent.push(self.send(hn, &fn_id, &ProtocolMessage::PassportRevoke(notice)));
        }
        self.collect_events();
        Ok(sent)
    }

    /// Has `mu` revoke its latest Visa from `fn_id`.
    pub fn revoke_visa(&mut self, mu: &str, fn_id: &str) -> Result<usize, SimError> {
        let visa_no = self.latest_visa(mu, fn_id)?;
        let msg = self.mobile_mut(mu)?.revoke_visa(fn_id, visa_no)?;
        let index = self.send(mu, fn_id, &ProtocolMessage::VisaRevoke(msg));
        self.collect_events();
        Ok(index)
    }

    pub fn advance_clock(&mut self, ms: u64) {
        let now = self.clock.advance(ms);
        self.trace.push(now, TraceEntry::Clock { now });
    }

    // ---- queue manipulation ----

    pub fn drop_next(&mut self) -> Result<Envelope, SimError> {
        let env = self.queue.pop_front().ok_or(SimError::EmptyQueue)?;
        self.record(TraceEntry::Dropped { index: env.index });
        Ok(env)
    }

    /// Queues a second copy of the next message right behind it.
    pub fn duplicate_next(&mut self) -> Result<usize, SimError> {
        let env = self.queue.front().cloned().ok_or(SimError::EmptyQueue)?;
        let copy = self
            .trace
            .capture(self.clock.now(), &env.from, &env.to, env.bytes.clone());
        self.record(TraceEntry::Duplicated { index: env.index, copy });
        self.queue.insert(1, Envelope { index: copy, ..env });
        Ok(copy)
    }

    /// Moves the next message to the back of the queue.
    pub fn delay_next(&mut self) -> Result<(), SimError> {
        let env = self.queue.pop_front().ok_or(SimError::EmptyQueue)?;
        self.record(TraceEntry::Delayed { index: env.index });
        self.queue.push_back(env);
        Ok(())
    }

    /// Flips every bit of one byte of the next message.
    pub fn tamper_next(&mut self, byte: usize) -> Result<usize, SimError> {
        let env = self.queue.pop_front().ok_or(SimError::EmptyQueue)?;
        if byte >= env.bytes.len() {
            let len = env.bytes.len();
            self.queue.push_front(env);
            return Err(SimError::TamperOutOfRange { index: byte, len });
        }
        let mut bytes = env.bytes.clone();
        bytes[byte] ^= 0xff;
        self.record(TraceEntry::Tampered { index: env.index, byte });
        let index = self.trace.capture(self.clock.now(), &env.from, &env.to, bytes.clone());
        self.queue.push_front(Envelope {
            index,
            from: env.from,
            to: env.to,
            bytes,
        });
        Ok(index)
    }

    /// Re-sends a captured message to `to`, spoofing its original sender,
    /// and delivers it at once.
    pub fn replay(&mut self, message_index: usize, to: &str) -> Result<Delivery, SimError> {
        let original = self
            .trace
            .message(message_index)
            .cloned()
            .ok_or(SimError::NoSuchMessage(message_index))?;
        self.node(to)?;
        self.note(format!("replay of #{message_index} to {to}"));
        let index = self
            .trace
            .capture(self.clock.now(), &original.from, to, original.bytes.clone());
        Ok(self.deliver_envelope(Envelope {
            index,
            from: original.from,
            to: to.to_string(),
            bytes: original.bytes,
        }))
    }

    // ---- delivery ----

    pub fn deliver_next(&mut self) -> Result<Delivery, SimError> {
        let env = self.queue.pop_front().ok_or(SimError::EmptyQueue)?;
        Ok(self.deliver_envelope(env))
    }

    /// Delivers until the queue is empty, returning every delivery.
    pub fn deliver_all(&mut self) -> Result<Vec<Delivery>, SimError> {
        const LIMIT: usize = 10_000;
        let mut out = Vec::new();
        while !self.queue.is_empty() {
            if out.len() >= LIMIT {
                return Err(SimError::DeliveryLimit(LIMIT));
            }
            out.push(self.deliver_next()?);
        }
        Ok(out)
    }

    fn deliver_envelope(&mut self, env: Envelope) -> Delivery {
        let outcome = self.dispatch(&env);
        let delivery = Delivery {
            index: env.index,
            to: env.to.clone(),
            outcome,
        };
        self.record(TraceEntry::Delivered {
            index: delivery.index,
            to: delivery.to.clone(),
            outcome: delivery.outcome.clone(),
        });
        self.collect_events();
        self.last = Some(delivery.clone());
        delivery
    }

    fn dispatch(&mut self, env: &Envelope) -> Result<String, String> {
        let Some(node) = self.nodes.get_mut(&env.to) else {
            return Err("unreachable".to_string());
        };
        let is_network = matches!(node, Node::Home(_) | Node::Foreign(_));
        let mut outgoing: Vec<(String, ProtocolMessage)> = Vec::new();
        let result = match node {
            Node::Attacker(a) => {
                a.captured.push(env.bytes.clone());
                Ok(Accepted::Text("captured".to_string()))
            }
            _ => match ProtocolMessage::decode(&env.bytes) {
                Err(_) => Err(Failure::Reply(RejectReason::Malformed)),
                Ok(ProtocolMessage::Reject(reason)) => Err(Failure::Silent(reason.as_str().to_string())),
                Ok(msg) => {
                    self.service_counter += 1;
                    let payload = format!("{}:{}:{}", env.to, env.from, self.service_counter).into_bytes();
                    handle(node, env, msg, &payload, &mut outgoing).map(|a| match a {
                        Accepted::ServiceGranted => {
                            self.pending_service.insert(env.from.clone(), payload);
                            Accepted::ServiceGranted
                        }
                        other => other,
                    })
                }
            },
        };
        let result = result.map(|accepted| match accepted {
            Accepted::Text(text) => text,
            Accepted::ServiceGranted => "service granted".to_string(),
            Accepted::ServicePayload(received) => {
                let sent = self.pending_service.remove(&env.to).unwrap_or_default();
                let receipt = ServiceReceipt {
                    mu: env.to.clone(),
                    sent,
                    received,
                };
                let intact = receipt.intact();
                self.receipts.push(receipt);
                if intact {
                    "service payload received".to_string()
                } else {
                    self.note(format!("{} accepted an altered service payload", env.to));
                    "service payload received (altered)".to_string()
                }
            }
        });
        for (to, msg) in outgoing {
            self.send(&env.to, &to, &msg);
        }
        match result {
            Ok(text) => Ok(text),
            Err(Failure::Reply(reason)) => {
                if is_network {
                    self.send(&env.to, &env.from, &ProtocolMessage::Reject(reason));
                }
                Err(reason.as_str().to_string())
            }
            Err(Failure::Silent(reason)) => Err(reason),
        }
    }
}

enum Accepted {
    Text(String),
    ServiceGranted,
    /// The MU decrypted a service payload.
    ServicePayload(Vec<u8>),
}

enum Failure {
    /// Answered with a `Reject` when the recipient is a network.
    Reply(RejectReason),
    /// Recorded only.
    Silent(String),
}

/// Runs one decoded message through its recipient. Replies are pushed onto
/// `outgoing` as `(to, message)`.
fn handle(
    node: &mut Node,
    env: &Envelope,
    msg: ProtocolMessage,
    service_bytes: &[u8],
    outgoing: &mut Vec<(String, ProtocolMessage)>,
) -> Result<Accepted, Failure> {
    use Failure::{Reply, Silent};
    match (node, msg) {
        (Node::Foreign(f), ProtocolMessage::VisaRequest(m)) => {
            let routed = f.handle_visa_request(&m, &env.from).map_err(Reply)?;
            let text = format!("forwarded to {}", routed.to);
            outgoing.push((routed.to, ProtocolMessage::ForwardToHn(routed.msg)));
            Ok(Accepted::Text(text))
        }
        (Node::Foreign(f), ProtocolMessage::HnDecision(m)) => {
            let routed = f.handle_hn_decision(&m).map_err(Reply)?;
            let text = format!("visa granted to {}", routed.to);
            outgoing.push((routed.to, ProtocolMessage::VisaGrant(routed.msg)));
            Ok(Accepted::Text(text))
        }
        (Node::Foreign(f), ProtocolMessage::ServiceRequest(m)) => {
            let resp = f.handle_service_request(&m, service_bytes, &env.from).map_err(Reply)?;
            outgoing.push((env.from.clone(), ProtocolMessage::ServiceResponse(resp)));
            Ok(Accepted::ServiceGranted)
        }
        (Node::Foreign(f), ProtocolMessage::PassportRevoke(m)) => match f.handle_passport_revoke(&m) {
            Ok(PassportRevokeOutcome::NoVisas) => Ok(Accepted::Text("passport revoked, no visas".to_string())),
            Ok(PassportRevokeOutcome::Revoked(n)) => {
                Ok(Accepted::Text(format!("passport revoked, {n} visas invalidated")))
            }
            Err(_) => Err(Silent(RejectReason::BadRevoke.as_str().to_string())),
        },
        (Node::Foreign(f), ProtocolMessage::VisaRevoke(m)) => {
            f.handle_visa_revoke(&m).map_err(Reply)?;
            Ok(Accepted::Text(format!("visa {} revoked", m.visa_no)))
        }
        (Node::Home(h), ProtocolMessage::ForwardToHn(m)) => {
            let decision = h.handle_forward(&m).map_err(Reply)?;
            outgoing.push((env.from.clone(), ProtocolMessage::HnDecision(decision)));
            Ok(Accepted::Text("decision issued".to_string()))
        }
        (Node::Mobile(mu), ProtocolMessage::VisaGrant(m)) => match mu.complete_visa_acquisition(&m) {
            Ok(visa_no) => Ok(Accepted::Text(format!("visa {visa_no} stored"))),
            Err(e) => Err(Silent(e.reason().to_string())),
        },
        (Node::Mobile(mu), ProtocolMessage::ServiceResponse(m)) => match mu.complete_service(&m) {
            Ok(payload) => Ok(Accepted::ServicePayload(payload)),
            Err(e) => Err(Silent(e.reason().to_string())),
        },
        _ => Err(Reply(RejectReason::Unexpected)),
    }
}
