//! Simulated clock. Real time is never consulted.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::crypto::Timestamp;

/// Default accepted skew for protocol timestamps, in milliseconds.
pub const DEFAULT_FRESHNESS_WINDOW_MS: u64 = 120_000;

/// A monotone millisecond clock. Clones share the same underlying time, so a
/// harness can hand one clock to every actor and advance them together.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    ticks: Arc<AtomicU64>,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ticks: u64) -> Self {
        Self {
            ticks: Arc::new(AtomicU64::new(ticks)),
        }
    }

    pub fn now(&self) -> Timestamp {
        Timestamp(self.ticks.load(Ordering::SeqCst))
    }

    pub fn advance(&self, ms: u64) -> Timestamp {
        let prev = self.ticks.fetch_add(ms, Ordering::SeqCst);
        Timestamp(prev + ms)
    }
}
