//! Real-time generator: one transmit worker per port, absolute-deadline
//! pacing, frames stamped with the send time.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swtg_core::clock::Clock;
use swtg_core::codec::{encode_frame_with_flags, FLAG_LAST};
use swtg_core::pacing::{
    derive_seed, PacingError, StreamPacer, StreamTxSummary, TxRecord, TxSummary, SEED_CONTENT,
};
use swtg_core::{PortId, StreamDescription, ValidatedConfig};

use crate::channel::TxChannel;

/// A worker this far behind its schedule reports backpressure.
pub const BACKPRESSURE_LAG_NS: u64 = 50_000_000;

/// Longest uninterrupted sleep, bounds the reaction time to `stop`.
const MAX_SLEEP_NS: u64 = 10_000_000;

pub type TxHook = Arc<dyn Fn(&TxRecord) + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("port {0} is already generating")]
    AlreadyRunning(PortId),
    #[error("generator is not running")]
    NotRunning,
    #[error(transparent)]
    Pacing(#[from] PacingError),
}

/// Ports with an active generator.
#[derive(Clone, Debug, Default)]
pub struct PortRegistry(Arc<Mutex<BTreeSet<PortId>>>);

impl PortRegistry {
    fn claim(&self, ports: &BTreeSet<PortId>) -> Result<(), EngineError> {
        let mut active = self.0.lock().unwrap();
        if let Some(p) = ports.intersection(&active).next() {
            return Err(EngineError::AlreadyRunning(*p));
        }
        active.extend(ports.iter().copied());
        Ok(())
    }

    fn release(&self, ports: &BTreeSet<PortId>) {
        let mut active = self.0.lock().unwrap();
        for p in ports {
            active.remove(p);
        }
    }

    pub fn is_active(&self, port: PortId) -> bool {
        self.0.lock().unwrap().contains(&port)
    }
}

#[derive(Clone, Default)]
pub struct EngineOptions {
    pub seed: u64,
    /// Keep every TxRecord, readable through [`GenHandle::records`].
    pub record_log: bool,
    /// Called for every transmitted frame, including closing frames.
    pub tx_hook: Option<TxHook>,
}

struct Lane {
    pacer: StreamPacer,
    desc: StreamDescription,
    rng: ChaCha8Rng,
    summary: StreamTxSummary,
}

struct Worker {
    port: PortId,
    lanes: Vec<Lane>,
    channel: Arc<dyn TxChannel>,
    clock: Arc<dyn Clock>,
    stop: Arc<AtomicBool>,
    log: Option<Arc<Mutex<Vec<TxRecord>>>>,
    hook: Option<TxHook>,
}

struct WorkerResult {
    streams: Vec<StreamTxSummary>,
    backpressure: bool,
}

impl Worker {
    fn send(&mut self, i: usize, seq: u64, flags: u8) {
        let lane = &mut self.lanes[i];
        let tx_ts = self.clock.now_ns();
        let bytes = encode_frame_with_flags(&lane.desc, seq, tx_ts, flags, &mut lane.rng);
        self.channel.transmit(self.port, bytes, tx_ts);
        lane.summary.add_frame(lane.desc.frame_size);
        let record = TxRecord {
            stream_id: lane.desc.stream_id,
            port: self.port,
            seq,
            tx_ts,
            frame_size: lane.desc.frame_size,
        };
        if let Some(log) = &self.log {
            log.lock().unwrap().push(record);
        }
        if let Some(hook) = &self.hook {
            hook(&record);
        }
    }

    fn run(mut self) -> WorkerResult {
        let mut backpressure = false;
        while !self.stop.load(Ordering::Relaxed) {
            let (i, deadline) = self
                .lanes
                .iter()
                .enumerate()
                .map(|(i, l)| (i, l.pacer.peek().departure_time))
                .min_by_key(|x| x.1)
                .expect("worker has streams");
            let now = self.clock.now_ns();
            if deadline > now {
                self.clock.sleep_until(deadline.min(now + MAX_SLEEP_NS));
                continue;
            }
            // late deadlines are sent right away, never skipped
            backpressure |= now - deadline > BACKPRESSURE_LAG_NS;
            let seq = self.lanes[i].pacer.advance().seq;
            self.send(i, seq, 0);
        }
        for i in 0..self.lanes.len() {
            let seq = self.lanes[i].pacer.scheduled();
            self.send(i, seq, FLAG_LAST);
        }
        WorkerResult {
            streams: self.lanes.into_iter().map(|l| l.summary).collect(),
            backpressure,
        }
    }
}

pub struct GenHandle {
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<WorkerResult>>,
    ports: BTreeSet<PortId>,
    registry: PortRegistry,
    log: Option<Arc<Mutex<Vec<TxRecord>>>>,
    clock: Arc<dyn Clock>,
    started_ns: u64,
    running: bool,
}

/// Starts transmitting `cfg`. Sequence numbers of every (port, stream)
/// start at 0.
pub fn start(
    cfg: &ValidatedConfig,
    channel: Arc<dyn TxChannel>,
    clock: Arc<dyn Clock>,
    registry: &PortRegistry,
    opts: EngineOptions,
) -> Result<GenHandle, EngineError> {
    let ports: BTreeSet<PortId> = cfg
        .streams()
        .iter()
        .flat_map(|s| s.tx_ports.iter().copied())
        .collect();
    let started_ns = clock.now_ns();
    let mut per_port = Vec::new();
    for &port in &ports {
        let mut lanes = Vec::new();
        for desc in cfg.streams().iter().filter(|s| s.tx_ports.contains(&port)) {
            lanes.push(Lane {
                pacer: StreamPacer::new(desc, port, started_ns, opts.seed)?,
                desc: desc.clone(),
                rng: ChaCha8Rng::seed_from_u64(derive_seed(
                    opts.seed,
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
        per_port.push((port, lanes));
    }
    registry.claim(&ports)?;

    let stop = Arc::new(AtomicBool::new(false));
    let log = opts.record_log.then(|| Arc::new(Mutex::new(Vec::new())));
    let workers = per_port
        .into_iter()
        .map(|(port, lanes)| {
            let w = Worker {
                port,
                lanes,
                channel: channel.clone(),
                clock: clock.clone(),
                stop: stop.clone(),
                log: log.clone(),
                hook: opts.tx_hook.clone(),
            };
            thread::Builder::new()
                .name(format!("tx-port-{}", port.0))
                .spawn(move || w.run())
                .expect("spawn tx worker")
        })
        .collect();
    Ok(GenHandle {
        stop,
        workers,
        ports,
        registry: registry.clone(),
        log,
        clock,
        started_ns,
        running: true,
    })
}

impl GenHandle {
    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn started_ns(&self) -> u64 {
        self.started_ns
    }

    /// Copy of the TxRecord log so far, empty unless `record_log` was set.
    pub fn records(&self) -> Vec<TxRecord> {
        self.log
            .as_ref()
            .map(|l| l.lock().unwrap().clone())
            .unwrap_or_default()
    }

    /// Stops all workers after each stream's closing frame went out.
    pub fn stop(&mut self) -> Result<TxSummary, EngineError> {
        if !self.running {
            return Err(EngineError::NotRunning);
        }
        self.running = false;
        self.stop.store(true, Ordering::Relaxed);
        let mut summary = TxSummary::default();
        for w in self.workers.drain(..) {
            let r = w.join().expect("tx worker panicked");
            summary.streams.extend(r.streams);
            summary.tx_backpressure |= r.backpressure;
        }
        summary.duration_ns = self.clock.now_ns() - self.started_ns;
        self.registry.release(&self.ports);
        Ok(summary)
    }
}

impl Drop for GenHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}
