//! Live receive path: channel sink → ARP responder → analyzer.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::thread;
use std::time::{Duration, Instant};

use swtg_core::analyzer::{RxAnalyzer, StatisticsSnapshot};
use swtg_core::clock::Clock;
use swtg_core::codec::{decode_frame, encode_arp_reply, ARP_REQUEST};
use swtg_core::impair::ImpairmentSpec;
use swtg_core::model::{GenerationConfig, PortConfig};
use swtg_core::pacing::TxSummary;
use swtg_core::profiles::{RunnerError, Trial, TrialOutcome, TrialRunner};
use swtg_core::{validate_config, DeviceProfile, MacAddr, PortId, ValidatedConfig, ValidationError};

use crate::channel::{Channel, TxChannel};
use crate::engine::{self, EngineError, EngineOptions, GenHandle, PortRegistry};

/// Grace period for in-flight frames after stop, on top of the channel's
/// worst-case delay.
const DRAIN_GRACE_NS: u64 = 500_000_000;

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("unknown port {0}")]
    UnknownPort(PortId),
    #[error("ARP replies on port {0} need a MAC address")]
    MissingArpMac(PortId),
}

pub struct LiveRuntime {
    channel: Arc<dyn Channel>,
    clock: Arc<dyn Clock>,
    analyzer: Arc<Mutex<RxAnalyzer>>,
    ports: Arc<RwLock<BTreeMap<PortId, PortConfig>>>,
    registry: PortRegistry,
    seed: AtomicU64,
    arp_replies: Arc<AtomicU64>,
}

impl LiveRuntime {
    pub fn new(channel: Arc<dyn Channel>, clock: Arc<dyn Clock>, ports: &[PortId], seed: u64) -> Arc<Self> {
        let rt = Arc::new(LiveRuntime {
            channel: channel.clone(),
            clock,
            analyzer: Arc::new(Mutex::new(RxAnalyzer::new(seed))),
            ports: Arc::new(RwLock::new(
                ports
                    .iter()
                    .map(|&p| {
                        (
                            p,
                            PortConfig {
                                port_id: p,
                                arp_reply_enabled: false,
                                arp_reply_mac: None,
                            },
                        )
                    })
                    .collect(),
            )),
            registry: PortRegistry::default(),
            seed: AtomicU64::new(seed),
            arp_replies: Arc::new(AtomicU64::new(0)),
        });
        let analyzer = rt.analyzer.clone();
        let port_cfg = rt.ports.clone();
        let replies = rt.arp_replies.clone();
        let tx: Weak<dyn Channel> = Arc::downgrade(&channel);
        channel.set_sink(Some(Arc::new(move |port, bytes: &[u8], rx_ts| {
            let Ok(frame) = decode_frame(bytes) else {
                analyzer.lock().unwrap().ingest_bytes(bytes, rx_ts, port);
                return;
            };
            let reply = frame
                .arp()
                .filter(|a| a.operation == ARP_REQUEST)
                .and_then(|a| arp_mac(&port_cfg, port).map(|mac| (a, mac)))
                .and_then(|(a, mac)| encode_arp_reply(a, mac).ok());
            analyzer.lock().unwrap().ingest(&frame, rx_ts, port);
            if let (Some(reply), Some(ch)) = (reply, tx.upgrade()) {
                replies.fetch_add(1, Ordering::Relaxed);
                let now = rx_ts;
                ch.transmit(port, reply, now);
            }
        })));
        rt
    }

    pub fn channel(&self) -> &Arc<dyn Channel> {
        &self.channel
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn analyzer(&self) -> &Arc<Mutex<RxAnalyzer>> {
        &self.analyzer
    }

    pub fn seed(&self) -> u64 {
        self.seed.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> StatisticsSnapshot {
        let now = self.clock.now_ns();
        self.analyzer.lock().unwrap().snapshot(now)
    }

    /// Starts from empty statistics.
    pub fn reset_analyzer(&self) {
        *self.analyzer.lock().unwrap() = RxAnalyzer::new(self.seed());
    }

    pub fn arp_replies_sent(&self) -> u64 {
        self.arp_replies.load(Ordering::Relaxed)
    }

    pub fn ports(&self) -> Vec<PortConfig> {
        self.ports.read().unwrap().values().cloned().collect()
    }

    pub fn set_arp(&self, port: PortId, enabled: bool, mac: Option<MacAddr>) -> Result<PortConfig, RuntimeError> {
        if enabled && mac.is_none() {
            return Err(RuntimeError::MissingArpMac(port));
        }
        let mut ports = self.ports.write().unwrap();
        let cfg = ports.get_mut(&port).ok_or(RuntimeError::UnknownPort(port))?;
        cfg.arp_reply_enabled = enabled;
        if mac.is_some() {
            cfg.arp_reply_mac = mac;
        }
        Ok(cfg.clone())
    }

    /// Applies the port settings carried by a configuration.
    pub fn apply_port_configs(&self, cfg: &GenerationConfig) -> Result<(), RuntimeError> {
        for pc in &cfg.port_configs {
            self.set_arp(pc.port_id, pc.arp_reply_enabled, pc.arp_reply_mac)?;
        }
        Ok(())
    }

    pub fn start(&self, cfg: &ValidatedConfig) -> Result<GenHandle, EngineError> {
        {
            let mut a = self.analyzer.lock().unwrap();
            for s in cfg.streams() {
                for &p in &s.tx_ports {
                    a.register_stream(p, s.stream_id);
                }
            }
        }
        let analyzer = self.analyzer.clone();
        let tx: Arc<dyn TxChannel> = self.channel.clone();
        engine::start(
            cfg,
            tx,
            self.clock.clone(),
            &self.registry,
            EngineOptions {
                seed: self.seed(),
                record_log: false,
                tx_hook: Some(Arc::new(move |r| {
                    analyzer
                        .lock()
                        .unwrap()
                        .record_tx(r.port, r.stream_id, r.frame_size, r.tx_ts)
                })),
            },
        )
    }

    /// Stops generation, waits for closing frames (bounded by the channel
    /// delay plus a grace period) and finalizes loss from the TX counts.
    pub fn stop(&self, handle: &mut GenHandle) -> Result<TxSummary, EngineError> {
        let summary = handle.stop()?;
        let spec = self.channel.impairment().unwrap_or_default();
        let worst = spec.delay_ns + spec.jitter_ns + spec.reorder_extra_delay_ns + DRAIN_GRACE_NS;
        let deadline = Instant::now() + Duration::from_nanos(worst);
        let ids: Vec<u8> = summary.streams.iter().map(|s| s.stream_id).collect();
        while Instant::now() < deadline {
            let a = self.analyzer.lock().unwrap();
            if ids.iter().all(|id| a.last_seen(*id)) {
                break;
            }
            drop(a);
            thread::sleep(Duration::from_millis(2));
        }
        let mut a = self.analyzer.lock().unwrap();
        for s in &summary.streams {
            let _ = a.finalize_with_expected(s.port, s.stream_id, s.frames);
        }
        Ok(summary)
    }
}

fn arp_mac(ports: &RwLock<BTreeMap<PortId, PortConfig>>, port: PortId) -> Option<MacAddr> {
    ports
        .read()
        .unwrap()
        .get(&port)
        .filter(|c| c.arp_reply_enabled)
        .and_then(|c| c.arp_reply_mac)
}

/// Runs profile trials on the live runtime in real time.
pub struct LiveRunner {
    pub runtime: Arc<LiveRuntime>,
    pub profile: DeviceProfile,
}

impl TrialRunner for LiveRunner {
    fn run_trial(&mut self, trial: &Trial) -> Result<TrialOutcome, RunnerError> {
        let err = |e: &dyn std::fmt::Display| RunnerError(e.to_string());
        let cfg = validate_config(
            &GenerationConfig {
                streams: vec![trial.stream.clone()],
                port_configs: Vec::new(),
            },
            self.profile,
        )
        .map_err(|e: ValidationError| err(&e))?;
        let rt = &self.runtime;
        rt.reset_analyzer();
        let mut handle = rt.start(&cfg).map_err(|e| err(&e))?;
        let t0 = Instant::now();
        if let Some(b) = trial.blackout {
            sleep_until(t0 + Duration::from_nanos(b.start_ns));
            rt.channel.trigger_blackout(b.duration_ns).map_err(|e| err(&e))?;
        }
        sleep_until(t0 + Duration::from_nanos(trial.duration_ns));
        let tx = rt.stop(&mut handle).map_err(|e| err(&e))?;
        let snap = rt.snapshot();
        let s = snap.stream(trial.stream.stream_id).cloned().unwrap_or_default();
        Ok(TrialOutcome {
            tx_frames: tx.frames(),
            rx_frames: s.rx.frames,
            lost: s.lost,
            rtt: s.rtt,
            iat: s.iat,
            max_gap: s.max_gap,
        })
    }
}

pub(crate) fn sleep_until(t: Instant) {
    let now = Instant::now();
    if t > now {
        thread::sleep(t - now);
    }
}

/// Impairment currently applied, identity for real transports.
pub fn current_impairment(rt: &LiveRuntime) -> ImpairmentSpec {
    rt.channel.impairment().unwrap_or_default()
}
