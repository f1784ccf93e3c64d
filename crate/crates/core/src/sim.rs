//! Single-threaded discrete-event loopback in virtual time.
//!
//! Pacers schedule departures, frames are encoded, offered to an
//! [`ImpairmentModel`], queued by delivery time, decoded on the same port
//! and fed to an [`RxAnalyzer`]. Identical inputs give identical results,
//! independent of host speed.

use alloc::collections::BinaryHeap;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analyzer::{RxAnalyzer, StatisticsSnapshot};
use crate::codec::{encode_frame_with_flags, FCS_LEN, FLAG_LAST};
use crate::impair::{Blackout, ChannelLog, ImpairError, ImpairmentModel, ImpairmentSpec};
use crate::model::{GenerationConfig, PortId, ValidatedConfig};
use crate::pacing::{derive_seed, PacingError, StreamPacer, StreamTxSummary, TxRecord, TxSummary, SEED_CONTENT};
use crate::profiles::{RunnerError, Trial, TrialOutcome, TrialRunner};

#[derive(Clone, Debug, Default)]
pub struct SimConfig {
    pub impairment: ImpairmentSpec,
    pub seed: u64,
    /// Keep the channel log in the outcome.
    pub log: bool,
    /// Keep every TxRecord in the outcome.
    pub tx_log: bool,
    /// Blackouts on top of the impairment spec, in simulation time.
    pub blackouts: Vec<Blackout>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Impairment(#[from] ImpairError),
    #[error(transparent)]
    Pacing(#[from] PacingError),
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub tx: TxSummary,
    pub tx_log: Vec<TxRecord>,
    pub channel_log: Option<ChannelLog>,
    pub analyzer: RxAnalyzer,
    pub end_ns: u64,
}

impl SimOutcome {
    pub fn snapshot(&self) -> StatisticsSnapshot {
        self.analyzer.snapshot(self.end_ns)
    }
}

struct Pending {
    deliver_ns: u64,
    order: u64,
    port: PortId,
    bytes: Vec<u8>,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        (self.deliver_ns, self.order) == (o.deliver_ns, o.order)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    // reversed for a min-heap on (deliver_ns, order)
    fn cmp(&self, o: &Self) -> core::cmp::Ordering {
        (o.deliver_ns, o.order).cmp(&(self.deliver_ns, self.order))
    }
}

struct Sim {
    channel: ImpairmentModel,
    analyzer: RxAnalyzer,
    queue: BinaryHeap<Pending>,
    order: u64,
}

impl Sim {
    fn deliver_until(&mut self, t: u64) {
        while self.queue.peek().is_some_and(|p| p.deliver_ns <= t) {
            let p = self.queue.pop().unwrap();
            self.analyzer.ingest_bytes(&p.bytes, p.deliver_ns, p.port);
        }
    }

    fn send(&mut self, port: PortId, stream_id: u8, seq: u64, t: u64, bytes: Vec<u8>) {
        let wire = bytes.len() as u32 + FCS_LEN;
        self.analyzer.record_tx(port, stream_id, wire, t);
        let outcome = self.channel.offer(stream_id, seq, wire, t);
        if let Some(deliver_ns) = outcome.deliver_ns {
            self.order += 1;
            self.queue.push(Pending {
                deliver_ns,
                order: self.order,
                port,
                bytes,
            });
        }
    }
}

/// Runs `cfg` for `duration_ns` of virtual time, then sends one closing
/// last-packet frame per stream and port and drains the channel.
pub fn simulate(
    cfg: &ValidatedConfig,
    duration_ns: u64,
    sim_cfg: &SimConfig,
) -> Result<SimOutcome, SimError> {
    let mut channel = ImpairmentModel::new(sim_cfg.impairment.clone(), sim_cfg.seed)?;
    if sim_cfg.log {
        channel = channel.with_log();
    }
    for b in &sim_cfg.blackouts {
        channel.add_blackout(*b);
    }
    let mut sim = Sim {
        channel,
        analyzer: RxAnalyzer::new(sim_cfg.seed),
        queue: BinaryHeap::new(),
        order: 0,
    };

    struct Lane<'a> {
        pacer: StreamPacer,
        desc: &'a crate::model::StreamDescription,
        rng: ChaCha8Rng,
        summary: StreamTxSummary,
    }
    let mut lanes = Vec::new();
    for desc in cfg.streams() {
        for &port in &desc.tx_ports {
            sim.analyzer.register_stream(port, desc.stream_id);
            lanes.push(Lane {
                pacer: StreamPacer::new(desc, port, 0, sim_cfg.seed)?,
                desc,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(
                    sim_cfg.seed,
                    port,
                    desc.stream_id,
                    SEED_CONTENT,
                )),
                summary: StreamTxSummary {
                    stream_id: desc.stream_id,
                    port,
                    ..Default::default()
                },
            });
        }
    }

    let mut tx_log = Vec::new();
    let mut next: BinaryHeap<Reverse<(u64, usize)>> = lanes
        .iter()
        .enumerate()
        .map(|(i, l)| Reverse((l.pacer.peek().departure_time, i)))
        .collect();
    while let Some(Reverse((t, i))) = next.pop() {
        if t >= duration_ns {
            continue;
        }
        sim.deliver_until(t);
        let lane = &mut lanes[i];
        let plan = lane.pacer.advance();
        let bytes = encode_frame_with_flags(lane.desc, plan.seq, t, 0, &mut lane.rng);
        lane.summary.add_frame(lane.desc.frame_size);
        if sim_cfg.tx_log {
            tx_log.push(TxRecord {
                stream_id: plan.stream_id,
                port: plan.port,
                seq: plan.seq,
                tx_ts: t,
                frame_size: lane.desc.frame_size,
            });
        }
        sim.send(plan.port, plan.stream_id, plan.seq, t, bytes);
        next.push(Reverse((lane.pacer.peek().departure_time, i)));
    }

    sim.deliver_until(duration_ns);
    for lane in &mut lanes {
        let seq = lane.pacer.scheduled();
        let bytes = encode_frame_with_flags(lane.desc, seq, duration_ns, FLAG_LAST, &mut lane.rng);
        lane.summary.add_frame(lane.desc.frame_size);
        sim.send(lane.summary.port, lane.summary.stream_id, seq, duration_ns, bytes);
    }
    sim.deliver_until(u64::MAX);

    for lane in &lanes {
        sim.analyzer
            .finalize_with_expected(lane.summary.port, lane.summary.stream_id, lane.summary.frames)
            .expect("registered stream");
    }

    Ok(SimOutcome {
        tx: TxSummary {
            streams: lanes.into_iter().map(|l| l.summary).collect(),
            tx_backpressure: false,
            duration_ns,
        },
        tx_log,
        channel_log: sim.channel.take_log(),
        analyzer: sim.analyzer,
        end_ns: duration_ns,
    })
}

/// Runs profile trials in virtual time against one impairment spec.
#[derive(Clone, Debug, Default)]
pub struct SimRunner {
    pub impairment: ImpairmentSpec,
    pub seed: u64,
    trials: u64,
}

impl SimRunner {
    pub fn new(impairment: ImpairmentSpec, seed: u64) -> Self {
        SimRunner {
            impairment,
            seed,
            trials: 0,
        }
    }

    pub fn trials_run(&self) -> u64 {
        self.trials
    }
}

impl TrialRunner for SimRunner {
    fn run_trial(&mut self, trial: &Trial) -> Result<TrialOutcome, RunnerError> {
        self.trials += 1;
        let cfg = crate::model::validate_config(
            &GenerationConfig {
                streams: alloc::vec![trial.stream.clone()],
                port_configs: Vec::new(),
            },
            crate::model::DeviceProfile::Gen2,
        )
        .map_err(|e| RunnerError(e.to_string()))?;
        let sim_cfg = SimConfig {
            impairment: self.impairment.clone(),
            seed: self.seed.wrapping_add(self.trials),
            blackouts: trial.blackout.into_iter().collect(),
            ..Default::default()
        };
        let out = simulate(&cfg, trial.duration_ns, &sim_cfg).map_err(|e| RunnerError(e.to_string()))?;
        let snap = out.snapshot();
        let s = snap
            .stream(trial.stream.stream_id)
            .cloned()
            .unwrap_or_default();
        Ok(TrialOutcome {
            tx_frames: out.tx.frames(),
            rx_frames: s.rx.frames,
            lost: s.lost,
            rtt: s.rtt,
            iat: s.iat,
            max_gap: s.max_gap,
        })
    }
}

#[cfg(test)]
mod tests;
