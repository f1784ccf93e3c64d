//! Ring of 100 ms aggregates derived from successive analyzer snapshots.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use swtg_core::analyzer::StatisticsSnapshot;

pub const SAMPLE_INTERVAL_NS: u64 = 100_000_000;
/// One hour of 100 ms points.
pub const DEFAULT_RETENTION: usize = 36_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesPoint {
    pub t_ns: u64,
    pub tx_rate_l1: f64,
    pub tx_rate_l2: f64,
    pub rx_rate_l1: f64,
    pub rx_rate_l2: f64,
    pub tx_frames: u64,
    pub rx_frames: u64,
    pub lost: u64,
    pub out_of_order: u64,
    pub rtt_mean_ns: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Totals {
    t_ns: u64,
    tx_l1: u64,
    tx_l2: u64,
    rx_l1: u64,
    rx_l2: u64,
    tx_frames: u64,
    rx_frames: u64,
}

impl Totals {
    fn of(s: &StatisticsSnapshot) -> Totals {
        let mut t = Totals {
            t_ns: s.timestamp_ns,
            ..Default::default()
        };
        for p in &s.ports {
            t.tx_l1 += p.tx.bytes_l1;
            t.tx_l2 += p.tx.bytes_l2;
            t.rx_l1 += p.rx.bytes_l1;
            t.rx_l2 += p.rx.bytes_l2;
            t.tx_frames += p.tx.frames;
            t.rx_frames += p.rx.frames;
        }
        t
    }
}

#[derive(Clone, Debug)]
pub struct TimeSeries {
    points: VecDeque<TimeSeriesPoint>,
    capacity: usize,
    prev: Option<Totals>,
}

impl Default for TimeSeries {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_RETENTION)
    }
}

impl TimeSeries {
    pub fn with_capacity(capacity: usize) -> Self {
        TimeSeries {
            points: VecDeque::new(),
            capacity: capacity.max(1),
            prev: None,
        }
    }

    /// Forgets the previous snapshot, e.g. after the analyzer was reset.
    pub fn rebaseline(&mut self) {
        self.prev = None;
    }

    /// Adds the interval since the previous snapshot. The first snapshot
    /// after a rebaseline only sets the reference.
    pub fn record(&mut self, snap: &StatisticsSnapshot) -> Option<TimeSeriesPoint> {
        let now = Totals::of(snap);
        let prev = self.prev.replace(now);
        let prev = prev.filter(|p| p.t_ns < now.t_ns && p.rx_frames <= now.rx_frames && p.tx_frames <= now.tx_frames)?;
        let dt = (now.t_ns - prev.t_ns) as f64 / 1e9;
        let bits = |a: u64, b: u64| (a - b) as f64 * 8.0 / dt;
        let mut point = TimeSeriesPoint {
            t_ns: now.t_ns,
            tx_rate_l1: bits(now.tx_l1, prev.tx_l1),
            tx_rate_l2: bits(now.tx_l2, prev.tx_l2),
            rx_rate_l1: bits(now.rx_l1, prev.rx_l1),
            rx_rate_l2: bits(now.rx_l2, prev.rx_l2),
            tx_frames: now.tx_frames,
            rx_frames: now.rx_frames,
            ..Default::default()
        };
        let mut rtt_n = 0;
        for s in &snap.streams {
            point.lost += s.lost;
            point.out_of_order += s.out_of_order;
            point.rtt_mean_ns += s.rtt.mean_ns * s.rtt.count as f64;
            rtt_n += s.rtt.count;
        }
        point.rtt_mean_ns = if rtt_n > 0 { point.rtt_mean_ns / rtt_n as f64 } else { 0.0 };
        if self.points.len() == self.capacity {
            self.points.pop_front();
        }
        self.points.push_back(point);
        Some(point)
    }

    pub fn points(&self) -> Vec<TimeSeriesPoint> {
        self.points.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn clear(&mut self) {
        self.points.clear();
        self.prev = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use swtg_core::analyzer::{PortSnapshot, TrafficCounters};
    use swtg_core::PortId;

    fn snap(t_ns: u64, frames: u64) -> StatisticsSnapshot {
        let c = TrafficCounters {
            frames,
            bytes_l2: frames * 100,
            bytes_l1: frames * 120,
            ..Default::default()
        };
        StatisticsSnapshot {
            timestamp_ns: t_ns,
            ports: vec![PortSnapshot {
                port: PortId(0),
                tx: c,
                rx: c,
                ..Default::default()
            }],
            streams: vec![],
        }
    }

    #[test]
    fn rates_from_deltas() {
        let mut ts = TimeSeries::default();
        assert!(ts.record(&snap(0, 0)).is_none());
        let p = ts.record(&snap(100_000_000, 1000)).unwrap();
        // 1000 frames * 120 B * 8 / 0.1 s
        assert!((p.rx_rate_l1 - 9.6e6).abs() < 1e-6);
        assert!((p.rx_rate_l2 - 8.0e6).abs() < 1e-6);
        assert_eq!(ts.len(), 1);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut ts = TimeSeries::with_capacity(3);
        for i in 0..10 {
            ts.record(&snap(i * SAMPLE_INTERVAL_NS, i * 10));
        }
        let pts = ts.points();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].t_ns, 7 * SAMPLE_INTERVAL_NS);
        assert_eq!(pts[2].t_ns, 9 * SAMPLE_INTERVAL_NS);
    }

    #[test]
    fn counter_reset_needs_new_baseline() {
        let mut ts = TimeSeries::default();
        ts.record(&snap(0, 0));
        ts.record(&snap(100_000_000, 500));
        assert!(ts.record(&snap(200_000_000, 10)).is_none());
        assert!(ts.record(&snap(300_000_000, 20)).is_some());
    }
}
