//! Deterministic simulation: a message bus carrying the three roles, an
//! adversary that can drop, duplicate, delay, modify, inject and replay
//! traffic, and an auditor that tracks trust, beliefs and key freshness.

pub mod adversary;
pub mod attacks;
pub mod audit;
pub mod network;
pub mod provision;
pub mod scenario;
pub mod trace;

pub use attacks::{run_attack_suite, AttackConfig, AttackReport};
pub use audit::{audit_key_freshness, FreshnessError, FreshnessReport, TrustAudit};
pub use network::{Delivery, Envelope, SimError, SimNet};
pub use scenario::{run_scenario, Scenario, ScenarioError, ScenarioRun};
pub use trace::{CapturedMessage, SessionKeys, Trace, TraceEntry};
