use std::thread;
use std::time::{Duration, Instant};

pub use swtg_core::clock::{Clock, VirtualClock};

/// Nanoseconds since the clock was created, from the monotonic system clock.
#[derive(Clone, Copy, Debug)]
pub struct MonotonicClock {
    epoch: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            epoch: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    fn sleep_until(&self, deadline_ns: u64) {
        let now = self.now_ns();
        if deadline_ns > now {
            thread::sleep(Duration::from_nanos(deadline_ns - now));
        }
    }
}
