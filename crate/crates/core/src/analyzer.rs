//! Receive-side statistics.
//!
//! The analyzer is a pure state machine: callers feed it decoded frames with
//! receive timestamps and read snapshots at a chosen `now_ns`. Sequence state
//! is tracked per (port, stream id).
//!
//! Sequence rules:
//! - a frame is a duplicate if its seq was already received within the last
//!   [`DUP_WINDOW`] sequence numbers; duplicates only bump `duplicates`
//! - a unique frame with `seq < highest_seq` is out of order
//! - `lost = highest_seq + 1 - unique_received`, a lower bound until the
//!   stream is finalized

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_frame, ts_delta, ParsedFrame, FCS_LEN, L1_OVERHEAD};
use crate::model::PortId;

pub const RATE_BUCKET_NS: u64 = 100_000_000;
pub const RATE_WINDOW_BUCKETS: u64 = 10;
pub const RESERVOIR_CAPACITY: usize = 65_536;
pub const DUP_WINDOW: u64 = 1024;

/// Upper bounds (inclusive) of the frame size histogram bins. Frames below
/// 64 bytes land in the first bin and frames above 9000 in the last.
pub const SIZE_BIN_UPPER: [u32; 7] = [64, 127, 255, 511, 1023, 1518, 9000];
pub const SIZE_BIN_LABELS: [&str; 7] = [
    "64", "65-127", "128-255", "256-511", "512-1023", "1024-1518", "1519-9000",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AnalyzerError {
    #[error("stream {0} is unknown to the analyzer")]
    StreamUnknown(u8),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub bins: [u64; 7],
}

impl SizeHistogram {
    pub fn bin_index(wire_size: u32) -> usize {
        SIZE_BIN_UPPER
            .iter()
            .position(|&u| wire_size <= u)
            .unwrap_or(SIZE_BIN_UPPER.len() - 1)
    }

    pub fn add(&mut self, wire_size: u32) {
        self.bins[Self::bin_index(wire_size)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameTypeCounts {
    pub p4tg: u64,
    pub arp: u64,
    pub other: u64,
}

/// Exact running mean/min/max plus a uniform reservoir of samples.
#[derive(Clone, Debug, Default)]
pub struct SampleStats {
    count: u64,
    sum: u128,
    min: u64,
    max: u64,
    reservoir: Vec<u64>,
}

impl SampleStats {
    pub fn add<R: Rng + ?Sized>(&mut self, v: u64, rng: &mut R) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.sum += u128::from(v);
        if self.reservoir.len() < RESERVOIR_CAPACITY {
            self.reservoir.push(v);
        } else {
            let j = rng.random_range(0..self.count);
            if (j as usize) < RESERVOIR_CAPACITY {
                self.reservoir[j as usize] = v;
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn max(&self) -> Option<u64> {
        (self.count > 0).then_some(self.max)
    }

    pub fn samples(&self) -> &[u64] {
        &self.reservoir
    }

    /// Nearest-rank percentile over the reservoir, `q` in [0, 1].
    pub fn percentile(&self, q: f64) -> Option<u64> {
        if self.reservoir.is_empty() {
            return None;
        }
        let mut v = self.reservoir.clone();
        v.sort_unstable();
        let rank = libm::ceil(q.clamp(0.0, 1.0) * v.len() as f64) as usize;
        Some(v[rank.saturating_sub(1)])
    }

    pub fn summary(&self) -> SampleSummary {
        SampleSummary {
            count: self.count,
            mean_ns: if self.count == 0 {
                0.0
            } else {
                self.sum as f64 / self.count as f64
            },
            min_ns: if self.count == 0 { 0 } else { self.min },
            max_ns: if self.count == 0 { 0 } else { self.max },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: u64,
    pub mean_ns: f64,
    pub min_ns: u64,
    pub max_ns: u64,
}

impl SampleSummary {
    pub fn merge(&self, other: &SampleSummary) -> SampleSummary {
        match (self.count, other.count) {
            (0, _) => *other,
            (_, 0) => *self,
            (a, b) => SampleSummary {
                count: a + b,
                mean_ns: (self.mean_ns * a as f64 + other.mean_ns * b as f64) / (a + b) as f64,
                min_ns: self.min_ns.min(other.min_ns),
                max_ns: self.max_ns.max(other.max_ns),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Bucket {
    index: u64,
    frames: u64,
    bytes_l2: u64,
}

/// Frame and byte totals plus a sliding rate window of 100 ms buckets.
#[derive(Clone, Debug, Default)]
struct Traffic {
    frames: u64,
    bytes_l2: u64,
    first_ts: Option<u64>,
    last_ts: u64,
    buckets: [Bucket; RATE_WINDOW_BUCKETS as usize + 1],
}

impl Traffic {
    fn add(&mut self, ts: u64, wire_size: u32) {
        self.frames += 1;
        self.bytes_l2 += u64::from(wire_size);
        self.first_ts.get_or_insert(ts);
        self.last_ts = self.last_ts.max(ts);
        let index = ts / RATE_BUCKET_NS;
        let slot = &mut self.buckets[(index % self.buckets.len() as u64) as usize];
        if slot.index != index {
            if slot.index > index && slot.frames > 0 {
                // older than anything the window can still show
                return;
            }
            *slot = Bucket {
                index,
                ..Bucket::default()
            };
        }
        slot.frames += 1;
        slot.bytes_l2 += u64::from(wire_size);
    }

    fn counters(&self, now_ns: u64) -> TrafficCounters {
        let current = now_ns / RATE_BUCKET_NS;
        let lo = current.saturating_sub(RATE_WINDOW_BUCKETS);
        let (mut frames, mut bytes) = (0u64, 0u64);
        for b in &self.buckets {
            if b.index >= lo && b.index < current && (b.frames > 0) {
                frames += b.frames;
                bytes += b.bytes_l2;
            }
        }
        let window_s = (current - lo) as f64 * RATE_BUCKET_NS as f64 / 1e9;
        let (frame_rate, rate_l2, rate_l1) = if window_s > 0.0 {
            (
                frames as f64 / window_s,
                bytes as f64 * 8.0 / window_s,
                (bytes + frames * u64::from(L1_OVERHEAD)) as f64 * 8.0 / window_s,
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        let mean_rate_l1 = match self.first_ts {
            Some(first) if self.last_ts > first && self.frames > 1 => {
                // average over the span covered by the frames, one inter-frame
                // gap per frame
                let span = (self.last_ts - first) as f64 * self.frames as f64
                    / (self.frames - 1) as f64;
                self.bytes_l1() as f64 * 8.0 * 1e9 / span
            }
            _ => 0.0,
        };
        TrafficCounters {
            frames: self.frames,
            bytes_l2: self.bytes_l2,
            bytes_l1: self.bytes_l1(),
            frame_rate,
            rate_l2,
            rate_l1,
            mean_rate_l1,
        }
    }

    fn bytes_l1(&self) -> u64 {
        self.bytes_l2 + self.frames * u64::from(L1_OVERHEAD)
    }
}

/// Counters and rates of one direction. Rates are bits/s over the last
/// second of complete 100 ms buckets; `mean_rate_l1` covers the whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficCounters {
    pub frames: u64,
    pub bytes_l2: u64,
    pub bytes_l1: u64,
    pub frame_rate: f64,
    pub rate_l2: f64,
    pub rate_l1: f64,
    pub mean_rate_l1: f64,
}

impl TrafficCounters {
    fn merge(&self, o: &TrafficCounters) -> TrafficCounters {
        TrafficCounters {
            frames: self.frames + o.frames,
            bytes_l2: self.bytes_l2 + o.bytes_l2,
            bytes_l1: self.bytes_l1 + o.bytes_l1,
            frame_rate: self.frame_rate + o.frame_rate,
            rate_l2: self.rate_l2 + o.rate_l2,
            rate_l1: self.rate_l1 + o.rate_l1,
            mean_rate_l1: self.mean_rate_l1 + o.mean_rate_l1,
        }
    }
}

const BITMAP_WORDS: usize = (DUP_WINDOW / 64) as usize;

/// Bit i set means `highest - i` was received.
#[derive(Clone, Debug, Default)]
struct SeqWindow([u64; BITMAP_WORDS]);

impl SeqWindow {
    fn shift(&mut self, n: u64) {
        if n >= DUP_WINDOW {
            self.0 = [0; BITMAP_WORDS];
            return;
        }
        let words = (n / 64) as usize;
        let bits = (n % 64) as u32;
        for i in (0..BITMAP_WORDS).rev() {
            let lo = i.checked_sub(words).map_or(0, |j| self.0[j]);
            let carry = match i.checked_sub(words + 1) {
                Some(j) if bits > 0 => self.0[j] >> (64 - bits),
                _ => 0,
            };
            self.0[i] = if bits == 0 { lo } else { (lo << bits) | carry };
        }
    }

    /// Sets bit `d`, returning whether it was already set.
    fn test_and_set(&mut self, d: u64) -> bool {
        let (w, b) = ((d / 64) as usize, d % 64);
        let was = self.0[w] >> b & 1 == 1;
        self.0[w] |= 1 << b;
        was
    }
}

#[derive(Clone, Debug, Default)]
struct StreamState {
    highest_seq: Option<u64>,
    unique: u64,
    duplicates: u64,
    out_of_order: u64,
    window: SeqWindow,
    last_seen: bool,
    finalized: Option<u64>,
    rx: Traffic,
    tx: Traffic,
    rtt: SampleStats,
    iat: SampleStats,
    last_rx_ts: Option<u64>,
    max_gap: Option<Gap>,
}

impl StreamState {
    fn on_seq(&mut self, seq: u64) {
        match self.highest_seq {
            None => {
                self.highest_seq = Some(seq);
                self.window.test_and_set(0);
                self.unique += 1;
            }
            Some(h) if seq > h => {
                self.window.shift(seq - h);
                self.window.test_and_set(0);
                self.highest_seq = Some(seq);
                self.unique += 1;
            }
            Some(h) => {
                let d = h - seq;
                if d < DUP_WINDOW && self.window.test_and_set(d) {
                    self.duplicates += 1;
                } else {
                    self.unique += 1;
                    self.out_of_order += 1;
                }
            }
        }
    }

    fn lost(&self) -> u64 {
        if let Some(expected) = self.finalized {
            return expected.saturating_sub(self.unique);
        }
        self.highest_seq
            .map_or(0, |h| (h + 1).saturating_sub(self.unique))
    }
}

/// Largest silence between two consecutive receptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start_ns: u64,
    pub end_ns: u64,
}

impl Gap {
    pub fn len_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }
}

#[derive(Clone, Debug, Default)]
struct PortState {
    tx: Traffic,
    rx: Traffic,
    sizes: SizeHistogram,
    types: FrameTypeCounts,
    iat: SampleStats,
    last_rx_ts: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PortSnapshot {
    pub port: PortId,
    pub tx: TrafficCounters,
    pub rx: TrafficCounters,
    pub rx_sizes: SizeHistogram,
    pub frame_types: FrameTypeCounts,
    pub iat: SampleSummary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamSnapshot {
    pub stream_id: u8,
    pub tx: TrafficCounters,
    pub rx: TrafficCounters,
    pub lost: u64,
    pub out_of_order: u64,
    pub duplicates: u64,
    pub finalized: bool,
    /// Set on a finalized stream that received nothing.
    pub no_rx: bool,
    pub rtt: SampleSummary,
    pub iat: SampleSummary,
    pub max_gap: Option<Gap>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatisticsSnapshot {
    pub timestamp_ns: u64,
    pub ports: Vec<PortSnapshot>,
    pub streams: Vec<StreamSnapshot>,
}

impl StatisticsSnapshot {
    pub fn stream(&self, stream_id: u8) -> Option<&StreamSnapshot> {
        self.streams.iter().find(|s| s.stream_id == stream_id)
    }

    pub fn port(&self, port: PortId) -> Option<&PortSnapshot> {
        self.ports.iter().find(|p| p.port == port)
    }
}

#[derive(Clone, Debug)]
pub struct RxAnalyzer {
    streams: BTreeMap<(PortId, u8), StreamState>,
    ports: BTreeMap<PortId, PortState>,
    rng: ChaCha8Rng,
}

impl Default for RxAnalyzer {
    fn default() -> Self {
        Self::new(0)
    }
}

impl RxAnalyzer {
    pub fn new(seed: u64) -> Self {
        RxAnalyzer {
            streams: BTreeMap::new(),
            ports: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Makes a stream known so that finalizing it without receptions
    /// reports `no_rx` instead of an unknown stream.
    pub fn register_stream(&mut self, port: PortId, stream_id: u8) {
        self.streams.entry((port, stream_id)).or_default();
    }

    pub fn record_tx(&mut self, port: PortId, stream_id: u8, wire_size: u32, tx_ts: u64) {
        self.ports.entry(port).or_default().tx.add(tx_ts, wire_size);
        self.streams
            .entry((port, stream_id))
            .or_default()
            .tx
            .add(tx_ts, wire_size);
    }

    /// Decodes and ingests a raw frame (FCS excluded). Undecodable frames
    /// are counted as `other`.
    pub fn ingest_bytes(&mut self, bytes: &[u8], rx_ts: u64, port: PortId) {
        match decode_frame(bytes) {
            Ok(f) => self.ingest(&f, rx_ts, port),
            Err(_) => {
                let wire = bytes.len() as u32 + FCS_LEN;
                let p = self.port_rx(port, wire, rx_ts);
                p.types.other += 1;
            }
        }
    }

    fn port_rx(&mut self, port: PortId, wire: u32, rx_ts: u64) -> &mut PortState {
        let p = self.ports.entry(port).or_default();
        p.rx.add(rx_ts, wire);
        p.sizes.add(wire);
        if let Some(prev) = p.last_rx_ts {
            p.iat.add(rx_ts.saturating_sub(prev), &mut self.rng);
        }
        p.last_rx_ts = Some(rx_ts);
        p
    }

    pub fn ingest(&mut self, frame: &ParsedFrame, rx_ts: u64, port: PortId) {
        let wire = frame.wire_size();
        let p = self.port_rx(port, wire, rx_ts);
        if !frame.is_p4tg {
            if frame.arp().is_some() {
                p.types.arp += 1;
            } else {
                p.types.other += 1;
            }
            return;
        }
        p.types.p4tg += 1;

        let s = self.streams.entry((port, frame.stream_id)).or_default();
        s.rx.add(rx_ts, wire);
        s.on_seq(frame.seq);
        if frame.is_last() {
            s.last_seen = true;
        }
        s.rtt.add(ts_delta(rx_ts, frame.tx_ts), &mut self.rng);
        if let Some(prev) = s.last_rx_ts {
            let gap = rx_ts.saturating_sub(prev);
            s.iat.add(gap, &mut self.rng);
            if s.max_gap.is_none_or(|g| gap > g.len_ns()) {
                s.max_gap = Some(Gap {
                    start_ns: prev,
                    end_ns: rx_ts,
                });
            }
        }
        s.last_rx_ts = Some(rx_ts.max(s.last_rx_ts.unwrap_or(0)));
    }

    /// Finalizes every port's state of `stream_id` from the sequence numbers
    /// observed. If the last-packet frame never arrived, the loss is only a
    /// lower bound; prefer [`finalize_with_expected`](Self::finalize_with_expected).
    pub fn finalize_stream(&mut self, stream_id: u8) -> Result<(), AnalyzerError> {
        let mut found = false;
        for ((_, id), s) in self.streams.iter_mut() {
            if *id == stream_id {
                found = true;
                s.finalized = Some(s.highest_seq.map_or(0, |h| h + 1));
            }
        }
        found
            .then_some(())
            .ok_or(AnalyzerError::StreamUnknown(stream_id))
    }

    /// Finalizes with the transmitted frame count known from the generator.
    pub fn finalize_with_expected(
        &mut self,
        port: PortId,
        stream_id: u8,
        expected: u64,
    ) -> Result<(), AnalyzerError> {
        let s = self
            .streams
            .get_mut(&(port, stream_id))
            .ok_or(AnalyzerError::StreamUnknown(stream_id))?;
        s.finalized = Some(expected.max(s.highest_seq.map_or(0, |h| h + 1)));
        Ok(())
    }

    /// Whether the closing frame of `stream_id` has arrived on every port.
    pub fn last_seen(&self, stream_id: u8) -> bool {
        let mut any = false;
        for ((_, id), s) in &self.streams {
            if *id == stream_id {
                any = true;
                if !s.last_seen {
                    return false;
                }
            }
        }
        any
    }

    pub fn stream_ids(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.streams.keys().map(|k| k.1).collect();
        ids.dedup();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Raw reservoirs of one stream for percentile or distribution checks.
    pub fn rtt_stats(&self, port: PortId, stream_id: u8) -> Option<&SampleStats> {
        self.streams.get(&(port, stream_id)).map(|s| &s.rtt)
    }

    pub fn iat_stats(&self, port: PortId, stream_id: u8) -> Option<&SampleStats> {
        self.streams.get(&(port, stream_id)).map(|s| &s.iat)
    }

    pub fn snapshot(&self, now_ns: u64) -> StatisticsSnapshot {
        let ports = self
            .ports
            .iter()
            .map(|(port, p)| PortSnapshot {
                port: *port,
                tx: p.tx.counters(now_ns),
                rx: p.rx.counters(now_ns),
                rx_sizes: p.sizes,
                frame_types: p.types,
                iat: p.iat.summary(),
            })
            .collect();

        let mut streams: BTreeMap<u8, StreamSnapshot> = BTreeMap::new();
        for ((_, id), s) in &self.streams {
            let part = StreamSnapshot {
                stream_id: *id,
                tx: s.tx.counters(now_ns),
                rx: s.rx.counters(now_ns),
                lost: s.lost(),
                out_of_order: s.out_of_order,
                duplicates: s.duplicates,
                finalized: s.finalized.is_some(),
                no_rx: s.finalized.is_some() && s.unique == 0,
                rtt: s.rtt.summary(),
                iat: s.iat.summary(),
                max_gap: s.max_gap,
            };
            streams
                .entry(*id)
                .and_modify(|acc| {
                    acc.tx = acc.tx.merge(&part.tx);
                    acc.rx = acc.rx.merge(&part.rx);
                    acc.lost += part.lost;
                    acc.out_of_order += part.out_of_order;
                    acc.duplicates += part.duplicates;
                    acc.finalized &= part.finalized;
                    acc.no_rx &= part.no_rx;
                    acc.rtt = acc.rtt.merge(&part.rtt);
                    acc.iat = acc.iat.merge(&part.iat);
                    if part.max_gap.map(|g| g.len_ns()) > acc.max_gap.map(|g| g.len_ns()) {
                        acc.max_gap = part.max_gap;
                    }
                })
                .or_insert(part);
        }

        StatisticsSnapshot {
            timestamp_ns: now_ns,
            ports,
            streams: streams.into_values().collect(),
        }
    }
}
