//! Departure scheduling for CBR and Poisson streams.
//!
//! Deadlines are absolute: the k-th CBR departure is `start + k * period`,
//! so a late wake-up never shifts later frames. Rates are L1 rates, i.e.
//! every frame costs `frame_size + 20` bytes of line time.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::L1_OVERHEAD;
use crate::model::{Mode, PortId, StreamDescription};

pub const NANOS_PER_SEC: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PacingError {
    #[error("target rate must be positive")]
    ZeroRate,
}

/// Inter-departure time in nanoseconds for `frame_size`-byte frames at
/// `rate_l1` bits/s.
pub fn cbr_period(frame_size: u32, rate_l1: f64) -> Result<f64, PacingError> {
    if !(rate_l1 > 0.0) || !rate_l1.is_finite() {
        return Err(PacingError::ZeroRate);
    }
    Ok(f64::from(frame_size + L1_OVERHEAD) * 8.0 * NANOS_PER_SEC / rate_l1)
}

/// Exponentially distributed gap with mean `mean_ns`, by inverse CDF.
pub fn poisson_next_gap<R: Rng + ?Sized>(mean_ns: f64, rng: &mut R) -> f64 {
    // u in [0, 1) so 1 - u is never zero
    let u: f64 = rng.random();
    -mean_ns * libm::log(1.0 - u)
}

/// L1 bits of one frame.
pub fn l1_bits(frame_size: u32) -> f64 {
    f64::from(frame_size + L1_OVERHEAD) * 8.0
}

/// Derives an independent seed for one (port, stream, purpose) triple.
pub fn derive_seed(base: u64, port: PortId, stream_id: u8, purpose: u8) -> u64 {
    let mut z = base
        ^ (u64::from(port.0) << 32)
        ^ (u64::from(stream_id) << 8)
        ^ u64::from(purpose)
        ^ 0x9e37_79b9_7f4a_7c15;
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const SEED_CONTENT: u8 = 0;
pub const SEED_TIMING: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeparturePlan {
    pub stream_id: u8,
    pub port: PortId,
    pub departure_time: u64,
    pub seq: u64,
}

/// One transmitted frame, as logged by the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub stream_id: u8,
    pub port: PortId,
    pub seq: u64,
    pub tx_ts: u64,
    pub frame_size: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamTxSummary {
    pub stream_id: u8,
    pub port: PortId,
    /// Frames sent, including the closing last-packet frame.
    pub frames: u64,
    pub bytes_l1: u64,
    pub bytes_l2: u64,
}

impl StreamTxSummary {
    pub fn add_frame(&mut self, frame_size: u32) {
        self.frames += 1;
        self.bytes_l2 += u64::from(frame_size);
        self.bytes_l1 += u64::from(frame_size + L1_OVERHEAD);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TxSummary {
    pub streams: Vec<StreamTxSummary>,
    /// Set when a transmit worker fell persistently behind its schedule.
    pub tx_backpressure: bool,
    pub duration_ns: u64,
}

impl TxSummary {
    pub fn frames(&self) -> u64 {
        self.streams.iter().map(|s| s.frames).sum()
    }

    pub fn for_stream(&self, stream_id: u8) -> impl Iterator<Item = &StreamTxSummary> {
        self.streams.iter().filter(move |s| s.stream_id == stream_id)
    }
}

/// Produces the departure schedule of one stream on one port.
#[derive(Clone, Debug)]
pub struct StreamPacer {
    stream_id: u8,
    port: PortId,
    mode: Mode,
    period_ns: f64,
    start_ns: u64,
    next_seq: u64,
    poisson_offset: f64,
    next_departure: u64,
    timing_rng: ChaCha8Rng,
}

impl StreamPacer {
    pub fn new(
        desc: &StreamDescription,
        port: PortId,
        start_ns: u64,
        seed: u64,
    ) -> Result<Self, PacingError> {
        let period_ns = cbr_period(desc.frame_size, desc.target_rate_l1)?;
        let mut pacer = StreamPacer {
            stream_id: desc.stream_id,
            port,
            mode: desc.mode,
            period_ns,
            start_ns,
            next_seq: 0,
            poisson_offset: 0.0,
            next_departure: start_ns,
            timing_rng: ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                port,
                desc.stream_id,
                SEED_TIMING,
            )),
        };
        if pacer.mode == Mode::Poisson {
            pacer.poisson_offset = poisson_next_gap(period_ns, &mut pacer.timing_rng);
            pacer.next_departure = start_ns + libm::round(pacer.poisson_offset) as u64;
        }
        Ok(pacer)
    }

    pub fn period_ns(&self) -> f64 {
        self.period_ns
    }

    pub fn stream_id(&self) -> u8 {
        self.stream_id
    }

    pub fn port(&self) -> PortId {
        self.port
    }

    /// Frames scheduled so far (the next sequence number).
    pub fn scheduled(&self) -> u64 {
        self.next_seq
    }

    pub fn peek(&self) -> DeparturePlan {
        DeparturePlan {
            stream_id: self.stream_id,
            port: self.port,
            departure_time: self.next_departure,
            seq: self.next_seq,
        }
    }

    /// Returns the current departure and schedules the following one.
    pub fn advance(&mut self) -> DeparturePlan {
        let plan = self.peek();
        self.next_seq += 1;
        let next = match self.mode {
            Mode::Cbr => {
                self.start_ns + libm::round(self.next_seq as f64 * self.period_ns) as u64
            }
            Mode::Poisson => {
                self.poisson_offset += poisson_next_gap(self.period_ns, &mut self.timing_rng);
                self.start_ns + libm::round(self.poisson_offset) as u64
            }
        };
        self.next_departure = next.max(plan.departure_time + 1);
        plan
    }
}

impl Iterator for StreamPacer {
    type Item = DeparturePlan;

    fn next(&mut self) -> Option<DeparturePlan> {
        Some(self.advance())
    }
}
