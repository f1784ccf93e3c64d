//! Time sources. Timestamps are nanoseconds since an arbitrary epoch chosen
//! by the clock (the generator epoch).

use core::sync::atomic::{AtomicU64, Ordering};

pub trait Clock: Send + Sync {
    fn now_ns(&self) -> u64;

    /// Blocks (or, for virtual clocks, advances) until `now_ns() >= deadline`.
    fn sleep_until(&self, deadline_ns: u64);
}

/// Manually driven clock for deterministic schedules. `sleep_until` jumps
/// forward instead of blocking.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new(start_ns: u64) -> Self {
        VirtualClock {
            now: AtomicU64::new(start_ns),
        }
    }

    pub fn advance(&self, delta_ns: u64) -> u64 {
        self.now.fetch_add(delta_ns, Ordering::SeqCst) + delta_ns
    }

    /// Moves the clock to `t` unless it is already later.
    pub fn advance_to(&self, t: u64) {
        self.now.fetch_max(t, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ns(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, deadline_ns: u64) {
        self.advance_to(deadline_ns);
    }
}
