//! Passport/Visa roaming authentication.
//!
//! A mobile user (MU) registered with a home network (HN) obtains an
//! HN-issued Passport. To use a foreign network (FN) that has no roaming
//! agreement with the HN, the MU presents the Passport; the FN relays it to
//! the HN, which vouches for the user, and the FN issues a Visa. Later service
//! sessions are authenticated with the Visa alone, each session deriving three
//! fresh keys and advancing a per-Visa chain key.
//!
//! Modules:
//! - [`crypto`]: the primitive suite and per-actor crypto contexts
//! - [`tokens`]: Passports, Visas and CA certificates
//! - [`wire`]: the binary message format
//! - [`actors`]: HN, FN and MU state machines
//! - [`sim`]: deterministic message bus, adversary, and trust auditor

pub mod actors;
pub mod clock;
pub mod crypto;
pub mod encoding;
pub mod key_schedule;
pub mod sim;
pub mod tokens;
pub mod wire;
