//! Execution traces. The rendered text of a trace is a pure function of the
//! scenario and its seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::actors::{ActorEvent, Belief, KeyKind, TrustLevel};
use crate::crypto::{SymmetricKey, Timestamp};
use crate::wire;

/// A message as it crossed the bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedMessage {
    pub index: usize,
    pub from: String,
    pub to: String,
    pub bytes: Vec<u8>,
}

/// Keys of one completed service session as agreed by both ends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub mu: String,
    pub fn_id: String,
    pub visa_no: u64,
    pub first: SymmetricKey,
    pub second: SymmetricKey,
    pub third: SymmetricKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEntry {
    Sent {
        index: usize,
    },
    Delivered {
        index: usize,
        to: String,
        outcome: Result<String, String>,
    },
    Dropped {
        index: usize,
    },
    Duplicated {
        index: usize,
        copy: usize,
    },
    Delayed {
        index: usize,
    },
    Tampered {
        index: usize,
        byte: usize,
    },
    Clock {
        now: Timestamp,
    },
    Event {
        actor: String,
        event: ActorEvent,
    },
    Trust {
        from: String,
        to: String,
        level: TrustLevel,
    },
    Session(SessionKeys),
    Assertion {
        line: usize,
        text: String,
        passed: bool,
    },
    Note(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub messages: Vec<CapturedMessage>,
    pub entries: Vec<(Timestamp, TraceEntry)>,
    /// Symmetric keys each actor has used for encryption or decryption.
    pub traffic_keys: BTreeMap<String, BTreeSet<SymmetricKey>>,
}

fn describe_event(event: &ActorEvent) -> String {
    match event {
        ActorEvent::Trust { peer, level } => format!("trust {peer} {}", level.as_str()),
        ActorEvent::Belief(Belief::Fresh { label, nonce }) => {
            format!("believes fresh({})={}", label.as_str(), hex::encode(nonce.as_bytes()))
        }
        ActorEvent::Belief(Belief::SharedKey { peer, kind }) => {
            format!("believes shared {} with {peer}", kind.as_str())
        }
        ActorEvent::KeyDerived(k) => format!(
            "key {} peer={} visa={} {}",
            k.kind.as_str(),
            k.peer,
            k.visa_no.map_or("-".to_string(), |v| v.to_string()),
            k.key.to_hex()
        ),
    }
}

impl Trace {
    pub fn message(&self, index: usize) -> Option<&CapturedMessage> {
        self.messages.get(index)
    }

    pub(crate) fn capture(&mut self, now: Timestamp, from: &str, to: &str, bytes: Vec<u8>) -> usize {
        let index = self.messages.len();
        self.messages.push(CapturedMessage {
            index,
            from: from.to_string(),
            to: to.to_string(),
            bytes,
        });
        self.entries.push((now, TraceEntry::Sent { index }));
        index
    }

    pub(crate) fn push(&mut self, now: Timestamp, entry: TraceEntry) {
        self.entries.push((now, entry));
    }

    /// Every delivery outcome that was a rejection, in order.
    pub fn rejections(&self) -> Vec<(usize, String, String)> {
        self.entries
            .iter()
            .filter_map(|(_, e)| match e {
                TraceEntry::Delivered {
                    index,
                    to,
                    outcome: Err(reason),
                } => Some((*index, to.clone(), reason.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn sessions(&self) -> Vec<&SessionKeys> {
        self.entries
            .iter()
            .filter_map(|(_, e)| match e {
                TraceEntry::Session(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    /// Keys of a given kind reported by any actor.
    pub fn derived_keys(&self, kind: KeyKind) -> Vec<(String, SymmetricKey)> {
        self.entries
            .iter()
            .filter_map(|(_, e)| match e {
                TraceEntry::Event {
                    actor,
                    event: ActorEvent::KeyDerived(k),
                } if k.kind == kind => Some((actor.clone(), k.key.clone())),
                _ => None,
            })
            .collect()
    }

    /// Annotated text: one line per entry, with a decoded view and hex dump
    /// under every sent message.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (seq, (now, entry)) in self.entries.iter().enumerate() {
            let _ = write!(out, "{seq:05} t={:<10} ", now.0);
            match entry {
                TraceEntry::Sent { index } => {
                    let m = &self.messages[*index];
                    let _ = writeln!(out, "send #{index} {} -> {} ({} bytes)", m.from, m.to, m.bytes.len());
                    for line in wire::annotate(&m.bytes).lines() {
                        let _ = writeln!(out, "    {line}");
                    }
                }
                TraceEntry::Delivered { index, to, outcome } => {
                    let _ = match outcome {
                        Ok(what) => writeln!(out, "deliver #{index} to {to}: ok {what}"),
                        Err(reason) => writeln!(out, "deliver #{index} to {to}: reject {reason}"),
                    };
                }
                TraceEntry::Dropped { index } => {
                    let _ = writeln!(out, "drop #{index}");
                }
                TraceEntry::Duplicated { index, copy } => {
                    let _ = writeln!(out, "duplicate #{index} as #{copy}");
                }
                TraceEntry::Delayed { index } => {
                    let _ = writeln!(out, "delay #{index}");
                }
                TraceEntry::Tampered { index, byte } => {
                    let _ = writeln!(out, "tamper #{index} byte {byte}");
                }
                TraceEntry::Clock { now } => {
                    let _ = writeln!(out, "clock -> {}", now.0);
                }
                TraceEntry::Event { actor, event } => {
                    let _ = writeln!(out, "{actor}: {}", describe_event(event));
                }
                TraceEntry::Trust { from, to, level } => {
                    let _ = writeln!(out, "audit: trust({from},{to}) = {}", level.as_str());
                }
                TraceEntry::Session(s) => {
                    let _ = writeln!(
                        out,
                        "audit: session {}<->{} visa {} SK1={} SK2={} SK3={}",
                        s.mu,
                        s.fn_id,
                        s.visa_no,
                        s.first.to_hex(),
                        s.second.to_hex(),
                        s.third.to_hex()
                    );
                }
                TraceEntry::Assertion { line, text, passed } => {
                    let _ = writeln!(
                        out,
                        "assert line {line}: {text} => {}",
                        if *passed { "PASS" } else { "FAIL" }
                    );
                }
                TraceEntry::Note(text) => {
                    let _ = writeln!(out, "note: {text}");
                }
            }
        }
        out
    }
}
