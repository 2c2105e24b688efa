//! Observer-side bookkeeping: trust levels between principals, beliefs held,
//! mutual authentication of service sessions, and key freshness.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::trace::{SessionKeys, Trace};
use crate::actors::{ActorEvent, Belief, KeyKind, KeyRecord, NonceLabel, TrustLevel};
use crate::crypto::SymmetricKey;

/// Trust, belief and session state derived from actor events.
#[derive(Debug, Clone, Default)]
pub struct TrustAudit {
    trust: BTreeMap<(String, String), TrustLevel>,
    beliefs: BTreeMap<String, BTreeSet<Belief>>,
    /// Every key an actor reported, in order.
    keys: Vec<(String, KeyRecord)>,
    /// MU-side SK′ per `(mu, visa_no)` for the session in flight.
    open_first: BTreeMap<(String, u64), SymmetricKey>,
    sessions: Vec<SessionKeys>,
}

/// What [`TrustAudit::observe`] concluded from one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditFinding {
    Trust {
        from: String,
        to: String,
        level: TrustLevel,
    },
    Session(SessionKeys),
}

impl TrustAudit {
    pub fn trust(&self, from: &str, to: &str) -> TrustLevel {
        self.trust
            .get(&(from.to_string(), to.to_string()))
            .copied()
            .unwrap_or_default()
    }

    pub fn trust_table(&self) -> &BTreeMap<(String, String), TrustLevel> {
        &self.trust
    }

    pub fn beliefs(&self, actor: &str) -> BTreeSet<Belief> {
        self.beliefs.get(actor).cloned().unwrap_or_default()
    }

    pub fn sessions(&self) -> &[SessionKeys] {
        &self.sessions
    }

    /// Number of mutually authenticated sessions between `mu` and `fn_id`.
    pub fn mutual_auth(&self, mu: &str, fn_id: &str) -> usize {
        self.sessions.iter().filter(|s| s.mu == mu && s.fn_id == fn_id).count()
    }

    fn raise(&mut self, from: &str, to: &str, level: TrustLevel, out: &mut Vec<AuditFinding>) {
        let slot = self.trust.entry((from.to_string(), to.to_string())).or_default();
        if level > *slot {
            *slot = level;
            out.push(AuditFinding::Trust {
                from: from.to_string(),
                to: to.to_string(),
                level,
            });
        }
    }

    /// Folds one actor event into the audit state.
    ///
    /// Actors only ever claim partial trust in a roaming peer. Full trust
    /// between an MU and an FN is granted here, when the MU's SK‴ equals the
    /// SK‴ the FN derived for the same Visa.
    pub fn observe(&mut self, actor: &str, event: &ActorEvent) -> Vec<AuditFinding> {
        let mut out = Vec::new();
        match event {
            ActorEvent::Trust { peer, level } => self.raise(actor, peer, *level, &mut out),
            ActorEvent::Belief(b) => {
                self.beliefs.entry(actor.to_string()).or_default().insert(b.clone());
            }
            ActorEvent::KeyDerived(rec) => {
                self.keys.push((actor.to_string(), rec.clone()));
                if let Some(visa_no) = rec.visa_no {
                    match rec.kind {
                        KeyKind::ServiceFirst => {
                            self.open_first.insert((actor.to_string(), visa_no), rec.key.clone());
                        }
                        KeyKind::ServiceThird => self.close_session(actor, visa_no, rec, &mut out),
                        _ => {}
                    }
                }
            }
        }
        out
    }

    fn fn_key(&self, fn_id: &str, peer: &str, visa_no: u64, kind: KeyKind, key: &SymmetricKey) -> bool {
        self.keys
            .iter()
            .any(|(a, r)| a == fn_id && r.peer == peer && r.visa_no == Some(visa_no) && r.kind == kind && &r.key == key)
    }

    fn close_session(&mut self, actor: &str, visa_no: u64, rec: &KeyRecord, out: &mut Vec<AuditFinding>) {
        // Only the MU side closes a session; the FN reports its keys first.
        let Some(first) = self.open_first.get(&(actor.to_string(), visa_no)).cloned() else {
            return;
        };
        let fn_id = rec.peer.clone();
        let second = self
            .keys
            .iter()
            .rev()
            .find(|(a, r)| a == actor && r.kind == KeyKind::ServiceSecond && r.visa_no == Some(visa_no))
            .map(|(_, r)| r.key.clone());
        let Some(second) = second else { return };
        let agreed = self.fn_key(&fn_id, actor, visa_no, KeyKind::ServiceThird, &rec.key)
            && self.fn_key(&fn_id, actor, visa_no, KeyKind::ServiceSecond, &second)
            && self.fn_key(&fn_id, actor, visa_no, KeyKind::ServiceFirst, &first);
        if !agreed {
            return;
        }
        self.open_first.remove(&(actor.to_string(), visa_no));
        let session = SessionKeys {
            mu: actor.to_string(),
            fn_id: fn_id.clone(),
            visa_no,
            first,
            second,
            third: rec.key.clone(),
        };
        self.sessions.push(session.clone());
        out.push(AuditFinding::Session(session));
        self.raise(actor, &fn_id, TrustLevel::Full, out);
        self.raise(&fn_id, actor, TrustLevel::Full, out);
    }

    fn believes_key(&self, actor: &str, peer: &str, kind: KeyKind) -> bool {
        self.beliefs.get(actor).is_some_and(|b| {
            b.contains(&Belief::SharedKey {
                peer: peer.to_string(),
                kind,
            })
        })
    }

    fn believes_fresh(&self, actor: &str, label: NonceLabel) -> bool {
        self.beliefs.get(actor).is_some_and(|b| {
            b.iter()
                .any(|x| matches!(x, Belief::Fresh { label: l, .. } if *l == label))
        })
    }

    /// The authentication goals for one MU/FN/HN triple, each with whether
    /// the observed beliefs and sessions meet it.
    pub fn goal_checklist(&self, mu: &str, fn_id: &str, hn: &str) -> Vec<(String, bool)> {
        let mut goals = Vec::new();
        let mut goal = |name: String, ok: bool| goals.push((name, ok));
        for kind in [
            KeyKind::MasterMuFn,
            KeyKind::SessionMuFn,
            KeyKind::ServiceSecond,
            KeyKind::ServiceThird,
        ] {
            goal(
                format!("{mu} believes {mu} <-{}-> {fn_id}", kind.as_str()),
                self.believes_key(mu, fn_id, kind),
            );
            goal(
                format!("{fn_id} believes {mu} <-{}-> {fn_id}", kind.as_str()),
                self.believes_key(fn_id, mu, kind),
            );
        }
        goal(
            format!("{hn} believes {mu} <-SK_MU-HN-> {hn}"),
            self.believes_key(hn, mu, KeyKind::SessionMuHn),
        );
        for label in [NonceLabel::RMu, NonceLabel::RFn] {
            goal(
                format!("{hn} believes fresh({})", label.as_str()),
                self.believes_fresh(hn, label),
            );
        }
        for label in [NonceLabel::RFn, NonceLabel::R2Fn, NonceLabel::R1Fn] {
            goal(
                format!("{mu} believes fresh({})", label.as_str()),
                self.believes_fresh(mu, label),
            );
        }
        for label in [NonceLabel::RMu, NonceLabel::R2Mu, NonceLabel::R1Mu] {
            goal(
                format!("{fn_id} believes fresh({})", label.as_str()),
                self.believes_fresh(fn_id, label),
            );
        }
        goal(
            format!("{mu} and {fn_id} mutually authenticated"),
            self.mutual_auth(mu, fn_id) > 0,
        );
        goal(
            format!("trust({mu},{fn_id}) = full"),
            self.trust(mu, fn_id) == TrustLevel::Full,
        );
        goals
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FreshnessError {
    #[error("need at least {needed} completed sessions, found {found}")]
    InsufficientSessions { needed: usize, found: usize },
    #[error("{a} and {b} are the same key")]
    FreshnessViolation { a: String, b: String },
    #[error("K_MU-FN {key} was used as a traffic key by {actor}")]
    MasterKeyUsed { key: String, actor: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreshnessReport {
    pub sessions: usize,
    pub distinct_keys: usize,
    pub master_keys_checked: usize,
}

/// Checks that every SK′, SK″ and SK‴ across the trace's sessions is
/// distinct, and that no Visa master key was ever used to encrypt or decrypt
/// traffic.
pub fn audit_key_freshness(trace: &Trace, min_sessions: usize) -> Result<FreshnessReport, FreshnessError> {
    let sessions = trace.sessions();
    if sessions.len() < min_sessions {
        return Err(FreshnessError::InsufficientSessions {
            needed: min_sessions,
            found: sessions.len(),
        });
    }
    let mut seen: BTreeMap<&SymmetricKey, String> = BTreeMap::new();
    for (i, s) in sessions.iter().enumerate() {
        for (name, key) in [("SK1", &s.first), ("SK2", &s.second), ("SK3", &s.third)] {
            let label = format!("session {i} {name}");
            if let Some(prev) = seen.insert(key, label.clone()) {
                return Err(FreshnessError::FreshnessViolation { a: prev, b: label });
            }
        }
    }
    let masters = trace.derived_keys(KeyKind::MasterMuFn);
    let distinct_masters: BTreeSet<&SymmetricKey> = masters.iter().map(|(_, k)| k).collect();
    for master in &distinct_masters {
        for (actor, used) in &trace.traffic_keys {
            if used.contains(*master) {
                return Err(FreshnessError::MasterKeyUsed {
                    key: master.to_hex(),
                    actor: actor.clone(),
                });
            }
        }
    }
    Ok(FreshnessReport {
        sessions: sessions.len(),
        distinct_keys: seen.len(),
        master_keys_checked: distinct_masters.len(),
    })
}
