//! Deterministic impairment model of the virtual DUT: loss, delay, jitter,
//! reordering, an L1 token-bucket capacity cap and blackout windows.
//!
//! The model only decides verdicts and delivery times. Moving bytes is the
//! job of the channel that owns it.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::L1_OVERHEAD;

/// Smallest bucket: two jumbo frames at L1.
pub const MIN_BURST_BYTES: u64 = 2 * (9000 + L1_OVERHEAD as u64);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blackout {
    pub start_ns: u64,
    pub duration_ns: u64,
}

impl Blackout {
    pub fn contains(&self, t: u64) -> bool {
        t >= self.start_ns && t - self.start_ns < self.duration_ns
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentSpec {
    pub drop_probability: f64,
    pub delay_ns: u64,
    /// Extra delay drawn uniformly from [0, jitter_ns].
    pub jitter_ns: u64,
    pub reorder_probability: f64,
    pub reorder_extra_delay_ns: u64,
    /// L1 capacity in bits/s; `None` is unlimited.
    pub capacity_l1: Option<f64>,
    /// Token bucket depth in bytes. Defaults to 1 ms worth of capacity,
    /// at least [`MIN_BURST_BYTES`].
    pub capacity_burst_bytes: Option<u64>,
    pub blackout: Option<Blackout>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ImpairError {
    #[error("invalid impairment spec: {0}")]
    InvalidSpec(&'static str),
}

fn probability_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl ImpairmentSpec {
    pub fn validate(&self) -> Result<(), ImpairError> {
        if !probability_ok(self.drop_probability) {
            return Err(ImpairError::InvalidSpec("drop_probability must be in [0, 1]"));
        }
        if !probability_ok(self.reorder_probability) {
            return Err(ImpairError::InvalidSpec("reorder_probability must be in [0, 1]"));
        }
        if let Some(c) = self.capacity_l1 {
            if !(c > 0.0) || !c.is_finite() {
                return Err(ImpairError::InvalidSpec("capacity_l1 must be positive"));
            }
        }
        if self.capacity_burst_bytes == Some(0) {
            return Err(ImpairError::InvalidSpec("capacity_burst_bytes must be positive"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == ImpairmentSpec::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Delivered,
    Dropped,
    Reordered,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Delivered => "delivered",
            Verdict::Dropped => "dropped",
            Verdict::Reordered => "reordered",
        }
    }

    pub fn is_delivered(&self) -> bool {
        *self != Verdict::Dropped
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    /// 0 for frames without a measurement header.
    pub stream_id: u8,
    pub seq: u64,
    pub verdict: Verdict,
    pub enqueue_ns: u64,
    pub deliver_ns: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLog {
    pub entries: Vec<LogEntry>,
}

impl ChannelLog {
    pub fn dropped(&self, stream_id: u8) -> u64 {
        self.count(stream_id, |v| v == Verdict::Dropped)
    }

    pub fn delivered(&self, stream_id: u8) -> u64 {
        self.count(stream_id, |v| v.is_delivered())
    }

    fn count(&self, stream_id: u8, f: impl Fn(Verdict) -> bool) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.stream_id == stream_id && f(e.verdict))
            .count() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub deliver_ns: Option<u64>,
}

#[derive(Clone, Debug)]
struct TokenBucket {
    /// bits/s, integral so refill arithmetic is exact
    rate: u128,
    /// in bit-nanoseconds per second units: 1 bit = 1e9 units
    depth: u128,
    tokens: u128,
    last_ns: Option<u64>,
}

const UNITS_PER_BIT: u128 = 1_000_000_000;

impl TokenBucket {
    fn new(rate_bps: f64, burst_bytes: Option<u64>) -> Self {
        let rate = libm::round(rate_bps) as u128;
        let burst = burst_bytes
            .unwrap_or_else(|| ((rate / 8 / 1000) as u64).max(MIN_BURST_BYTES));
        let depth = u128::from(burst) * 8 * UNITS_PER_BIT;
        TokenBucket {
            rate,
            depth,
            tokens: depth,
            last_ns: None,
        }
    }

    fn admit(&mut self, now_ns: u64, l1_bytes: u64) -> bool {
        if let Some(last) = self.last_ns {
            if now_ns > last {
                let refill = u128::from(now_ns - last) * self.rate;
                self.tokens = (self.tokens + refill).min(self.depth);
            }
        }
        self.last_ns = Some(self.last_ns.map_or(now_ns, |l| l.max(now_ns)));
        let cost = u128::from(l1_bytes) * 8 * UNITS_PER_BIT;
        if self.tokens >= cost {
            self.tokens -= cost;
            true
        } else {
            false
        }
    }
}

#[derive(Clone, Debug)]
pub struct ImpairmentModel {
    spec: ImpairmentSpec,
    rng: ChaCha8Rng,
    bucket: Option<TokenBucket>,
    extra_blackouts: Vec<Blackout>,
    last_fifo_deliver: u64,
    log: Option<ChannelLog>,
}

impl ImpairmentModel {
    pub fn new(spec: ImpairmentSpec, seed: u64) -> Result<Self, ImpairError> {
        spec.validate()?;
        let bucket = spec
            .capacity_l1
            .map(|c| TokenBucket::new(c, spec.capacity_burst_bytes));
        Ok(ImpairmentModel {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bucket,
            extra_blackouts: Vec::new(),
            last_fifo_deliver: 0,
            log: None,
        })
    }

    /// Keeps a [`ChannelLog`] of every offered frame.
    pub fn with_log(mut self) -> Self {
        self.log = Some(ChannelLog::default());
        self
    }

    pub fn spec(&self) -> &ImpairmentSpec {
        &self.spec
    }

    pub fn log(&self) -> Option<&ChannelLog> {
        self.log.as_ref()
    }

    pub fn take_log(&mut self) -> Option<ChannelLog> {
        self.log.as_mut().map(core::mem::take)
    }

    /// Adds a blackout window on top of the configured one.
    pub fn add_blackout(&mut self, b: Blackout) {
        self.extra_blackouts.push(b);
    }

    fn blacked_out(&self, t: u64) -> bool {
        self.spec.blackout.is_some_and(|b| b.contains(t))
            || self.extra_blackouts.iter().any(|b| b.contains(t))
    }

    /// Decides the fate of one frame of `wire_size` bytes (FCS included)
    /// offered at `enqueue_ns`.
    pub fn offer(&mut self, stream_id: u8, seq: u64, wire_size: u32, enqueue_ns: u64) -> Outcome {
        let outcome = self.decide(wire_size, enqueue_ns);
        if let Some(log) = &mut self.log {
            log.entries.push(LogEntry {
                stream_id,
                seq,
                verdict: outcome.verdict,
                enqueue_ns,
                deliver_ns: outcome.deliver_ns,
            });
        }
        outcome
    }

    fn decide(&mut self, wire_size: u32, t: u64) -> Outcome {
        const DROPPED: Outcome = Outcome {
            verdict: Verdict::Dropped,
            deliver_ns: None,
        };
        if self.blacked_out(t) {
            return DROPPED;
        }
        if self.spec.drop_probability > 0.0 && self.rng.random::<f64>() < self.spec.drop_probability {
            return DROPPED;
        }
        if let Some(bucket) = &mut self.bucket {
            if !bucket.admit(t, u64::from(wire_size + L1_OVERHEAD)) {
                return DROPPED;
            }
        }
        let mut deliver = t + self.spec.delay_ns;
        if self.spec.jitter_ns > 0 {
            deliver += self.rng.random_range(0..=self.spec.jitter_ns);
        }
        let reordered = self.spec.reorder_probability > 0.0
            && self.rng.random::<f64>() < self.spec.reorder_probability;
        if reordered {
            return Outcome {
                verdict: Verdict::Reordered,
                deliver_ns: Some(deliver + self.spec.reorder_extra_delay_ns),
            };
        }
        if self.spec.jitter_ns == 0 {
            // keep FIFO order among regular frames
            deliver = deliver.max(self.last_fifo_deliver);
            self.last_fifo_deliver = deliver;
        }
        Outcome {
            verdict: Verdict::Delivered,
            deliver_ns: Some(deliver),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn run(spec: ImpairmentSpec, seed: u64, n: u64, gap_ns: u64, size: u32) -> ChannelLog {
        let mut m = ImpairmentModel::new(spec, seed).unwrap().with_log();
        for i in 0..n {
            m.offer(1, i, size, i * gap_ns);
        }
        m.take_log().unwrap()
    }

    #[test]
    fn identity_is_fifo() {
        let log = run(ImpairmentSpec::default(), 0, 1000, 100, 64);
        for (i, e) in log.entries.iter().enumerate() {
            assert_eq!(e.verdict, Verdict::Delivered);
            assert_eq!(e.deliver_ns, Some(i as u64 * 100));
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            ImpairmentSpec { drop_probability: 1.5, ..Default::default() },
            ImpairmentSpec { drop_probability: f64::NAN, ..Default::default() },
            ImpairmentSpec { reorder_probability: -0.1, ..Default::default() },
            ImpairmentSpec { capacity_l1: Some(0.0), ..Default::default() },
            ImpairmentSpec { capacity_burst_bytes: Some(0), ..Default::default() },
        ];
        for s in bad {
            assert!(ImpairmentModel::new(s, 0).is_err());
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = ImpairmentSpec {
            drop_probability: 0.1,
            jitter_ns: 500,
            reorder_probability: 0.05,
            reorder_extra_delay_ns: 1000,
            ..Default::default()
        };
        assert_eq!(run(spec.clone(), 7, 5000, 100, 64), run(spec.clone(), 7, 5000, 100, 64));
        assert_ne!(run(spec.clone(), 7, 5000, 100, 64), run(spec, 8, 5000, 100, 64));
    }

    #[test]
    fn binomial_drop_count() {
        let n = 100_000u64;
        let p = 0.01;
        let log = run(ImpairmentSpec { drop_probability: p, ..Default::default() }, 3, n, 10, 64);
        let dropped = log.dropped(1) as f64;
        let sd = libm::sqrt(n as f64 * p * (1.0 - p));
        assert!((dropped - n as f64 * p).abs() < 5.0 * sd, "{dropped}");
        assert_eq!(log.dropped(1) + log.delivered(1), n);
    }

    #[test]
    fn capacity_caps_delivered_rate() {
        // 300 Mb/s offered of 512 B frames into a 200 Mb/s bucket for 1 s
        let period = 532.0 * 8.0 / 300e6 * 1e9;
        let n = (1e9 / period) as u64;
        let mut m = ImpairmentModel::new(
            ImpairmentSpec { capacity_l1: Some(200e6), ..Default::default() },
            0,
        )
        .unwrap();
        let delivered = (0..n)
            .filter(|&i| m.offer(1, i, 512, libm::round(i as f64 * period) as u64).verdict.is_delivered())
            .count() as f64;
        let rate = delivered * 532.0 * 8.0;
        let burst_bits = (200e6 / 1000.0) as f64;
        assert!(rate <= 200e6 + burst_bits, "{rate}");
        assert!(rate >= 199e6, "{rate}");
    }

    #[test]
    fn capacity_below_limit_is_lossless() {
        let period = 532.0 * 8.0 / 199e6 * 1e9;
        let mut m = ImpairmentModel::new(
            ImpairmentSpec { capacity_l1: Some(200e6), ..Default::default() },
            0,
        )
        .unwrap();
        for i in 0..200_000u64 {
            let t = libm::round(i as f64 * period) as u64;
            assert!(m.offer(1, i, 512, t).verdict.is_delivered(), "frame {i}");
        }
    }

    #[test]
    fn blackout_drops_exactly_the_window() {
        let b = Blackout { start_ns: 1000, duration_ns: 500 };
        let log = run(ImpairmentSpec { blackout: Some(b), ..Default::default() }, 0, 30, 100, 64);
        for e in &log.entries {
            let inside = (1000..1500).contains(&e.enqueue_ns);
            assert_eq!(e.verdict == Verdict::Dropped, inside, "{}", e.enqueue_ns);
        }
        assert_eq!(log.dropped(1), 5);
    }

    #[test]
    fn delay_and_jitter_bounds() {
        let spec = ImpairmentSpec { delay_ns: 5_000_000, jitter_ns: 2_000_000, ..Default::default() };
        let log = run(spec, 1, 100_000, 1000, 64);
        let mut sum = 0.0;
        for e in &log.entries {
            let d = e.deliver_ns.unwrap() - e.enqueue_ns;
            assert!((5_000_000..=7_000_000).contains(&d));
            sum += d as f64;
        }
        let mean = sum / log.entries.len() as f64;
        assert!((mean / 6e6 - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn reordered_frames_get_extra_delay() {
        let spec = ImpairmentSpec {
            reorder_probability: 0.2,
            reorder_extra_delay_ns: 10_000,
            ..Default::default()
        };
        let log = run(spec, 2, 1000, 100, 64);
        let mut seen = vec![];
        for e in &log.entries {
            let d = e.deliver_ns.unwrap() - e.enqueue_ns;
            match e.verdict {
                Verdict::Reordered => assert_eq!(d, 10_000),
                Verdict::Delivered => assert_eq!(d, 0),
                Verdict::Dropped => unreachable!(),
            }
            seen.push(e.verdict);
        }
        assert!(seen.contains(&Verdict::Reordered));
    }

    #[test]
    fn spec_round_trips_through_serde_defaults() {
        let spec = ImpairmentSpec::default();
        assert!(spec.is_identity());
        assert!(spec.validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn channel_invariants(
            drop in 0.0f64..0.5,
            delay in 0u64..10_000,
            gaps in proptest::collection::vec(0u64..2_000, 1..300),
            seed in 0u64..1000,
            cap in proptest::option::of(1e6f64..1e9),
        ) {
            let spec = ImpairmentSpec { drop_probability: drop, delay_ns: delay, capacity_l1: cap, ..Default::default() };
            let offer = |seed| {
                let mut m = ImpairmentModel::new(spec.clone(), seed).unwrap().with_log();
                let mut t = 0;
                for (i, g) in gaps.iter().enumerate() {
                    t += g;
                    m.offer(1, i as u64, 128, t);
                }
                m.take_log().unwrap()
            };
            let log = offer(seed);
            proptest::prop_assert_eq!(&log, &offer(seed));
            proptest::prop_assert_eq!(log.entries.len(), gaps.len());
            proptest::prop_assert_eq!(log.dropped(1) + log.delivered(1), gaps.len() as u64);
            let delivered: Vec<u64> = log.entries.iter().filter_map(|e| e.deliver_ns).collect();
            proptest::prop_assert!(delivered.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
