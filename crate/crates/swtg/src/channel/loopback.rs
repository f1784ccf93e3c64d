use std::collections::BinaryHeap;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use swtg_core::clock::Clock;
use swtg_core::codec::{decode_frame, FCS_LEN};
use swtg_core::impair::{Blackout, ChannelLog, ImpairmentModel, ImpairmentSpec, LogEntry};
use swtg_core::PortId;

use super::{Channel, ChannelError, RxSink, Tap, TxChannel};

const SPIN_NS: u64 = 200_000;

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
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (o.deliver_ns, o.order).cmp(&(self.deliver_ns, self.order))
    }
}

#[derive(Default)]
struct Queue {
    heap: BinaryHeap<Pending>,
    order: u64,
    shutdown: bool,
}

impl Queue {
    fn push(&mut self, deliver_ns: u64, port: PortId, bytes: Vec<u8>) {
        self.order += 1;
        self.heap.push(Pending {
            deliver_ns,
            order: self.order,
            port,
            bytes,
        });
    }
}

struct Model {
    model: ImpairmentModel,
    seed: u64,
    log: Option<ChannelLog>,
}

struct Inner {
    clock: Arc<dyn Clock>,
    model: Mutex<Model>,
    queue: Mutex<Queue>,
    wake: Condvar,
    sink: RwLock<Option<RxSink>>,
    taps: RwLock<Vec<Tap>>,
}

/// In-process virtual DUT: frames sent on a port come back on the same
/// port after passing the impairment model. One delivery worker hands
/// frames to the sink in delivery-time order.
pub struct LoopbackChannel {
    inner: Arc<Inner>,
    worker: Option<JoinHandle<()>>,
}

impl LoopbackChannel {
    pub fn open(spec: ImpairmentSpec, seed: u64, clock: Arc<dyn Clock>) -> Result<Self, ChannelError> {
        Self::build(spec, seed, clock, false)
    }

    /// Like [`open`](Self::open), recording a [`ChannelLog`].
    pub fn open_logged(spec: ImpairmentSpec, seed: u64, clock: Arc<dyn Clock>) -> Result<Self, ChannelError> {
        Self::build(spec, seed, clock, true)
    }

    fn build(spec: ImpairmentSpec, seed: u64, clock: Arc<dyn Clock>, log: bool) -> Result<Self, ChannelError> {
        let inner = Arc::new(Inner {
            clock,
            model: Mutex::new(Model {
                model: ImpairmentModel::new(spec, seed)?,
                seed,
                log: log.then(ChannelLog::default),
            }),
            queue: Mutex::new(Queue::default()),
            wake: Condvar::new(),
            sink: RwLock::new(None),
            taps: RwLock::new(Vec::new()),
        });
        let worker = {
            let inner = inner.clone();
            thread::Builder::new()
                .name("loopback-delivery".into())
                .spawn(move || deliver(&inner))
                .expect("spawn delivery worker")
        };
        Ok(LoopbackChannel {
            inner,
            worker: Some(worker),
        })
    }

    /// Frames queued but not delivered yet.
    pub fn in_flight(&self) -> usize {
        self.inner.queue.lock().unwrap().heap.len()
    }
}

fn deliver(inner: &Inner) {
    let mut q = inner.queue.lock().unwrap();
    loop {
        if q.shutdown {
            return;
        }
        let Some(next) = q.heap.peek() else {
            q = inner.wake.wait(q).unwrap();
            continue;
        };
        let now = inner.clock.now_ns();
        if next.deliver_ns > now {
            let left = next.deliver_ns - now;
            if left <= SPIN_NS {
                // timed waits overshoot by tens of microseconds
                drop(q);
                thread::yield_now();
                q = inner.queue.lock().unwrap();
            } else {
                let wait = Duration::from_nanos((left - SPIN_NS).min(100_000_000));
                q = inner.wake.wait_timeout(q, wait).unwrap().0;
            }
            continue;
        }
        let p = q.heap.pop().unwrap();
        drop(q);
        let sink = inner.sink.read().unwrap().clone();
        if let Some(sink) = sink {
            sink(p.port, &p.bytes, inner.clock.now_ns());
        }
        q = inner.queue.lock().unwrap();
    }
}

impl TxChannel for LoopbackChannel {
    fn transmit(&self, port: PortId, frame: Vec<u8>, tx_ts: u64) {
        for tap in self.inner.taps.read().unwrap().iter() {
            tap(port, &frame, tx_ts);
        }
        let wire = frame.len() as u32 + FCS_LEN;
        let outcome = {
            let mut m = self.inner.model.lock().unwrap();
            let outcome = m.model.offer(0, 0, wire, tx_ts);
            if let Some(log) = &mut m.log {
                let (stream_id, seq) = decode_frame(&frame)
                    .ok()
                    .filter(|f| f.is_p4tg)
                    .map_or((0, 0), |f| (f.stream_id, f.seq));
                log.entries.push(LogEntry {
                    stream_id,
                    seq,
                    verdict: outcome.verdict,
                    enqueue_ns: tx_ts,
                    deliver_ns: outcome.deliver_ns,
                });
            }
            outcome
        };
        if let Some(deliver_ns) = outcome.deliver_ns {
            self.inner.queue.lock().unwrap().push(deliver_ns, port, frame);
            self.inner.wake.notify_one();
        }
    }
}

impl Channel for LoopbackChannel {
    fn set_sink(&self, sink: Option<RxSink>) {
        *self.inner.sink.write().unwrap() = sink;
    }

    fn add_tap(&self, tap: Tap) {
        self.inner.taps.write().unwrap().push(tap);
    }

    fn inject(&self, port: PortId, frame: Vec<u8>) {
        let now = self.inner.clock.now_ns();
        self.inner.queue.lock().unwrap().push(now, port, frame);
        self.inner.wake.notify_one();
    }

    fn trigger_blackout(&self, duration_ns: u64) -> Result<(), ChannelError> {
        let start_ns = self.inner.clock.now_ns();
        self.inner.model.lock().unwrap().model.add_blackout(Blackout {
            start_ns,
            duration_ns,
        });
        Ok(())
    }

    fn set_impairment(&self, spec: ImpairmentSpec) -> Result<(), ChannelError> {
        let mut m = self.inner.model.lock().unwrap();
        m.model = ImpairmentModel::new(spec, m.seed)?;
        Ok(())
    }

    fn impairment(&self) -> Option<ImpairmentSpec> {
        Some(self.inner.model.lock().unwrap().model.spec().clone())
    }

    fn take_log(&self) -> Option<ChannelLog> {
        self.inner.model.lock().unwrap().log.as_mut().map(std::mem::take)
    }
}

impl Drop for LoopbackChannel {
    fn drop(&mut self) {
        self.inner.queue.lock().unwrap().shutdown = true;
        self.inner.wake.notify_all();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
