use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use swtg::clock::{Clock, MonotonicClock};
use swtg::engine::{self, EngineError, EngineOptions, PortRegistry};
use swtg::channel::TxChannel;
use swtg::orchestrator::default_stream;
use swtg_core::codec::{decode_frame, FCS_LEN, MAGIC};
use swtg_core::model::GenerationConfig;
use swtg_core::{validate_config, DeviceProfile, Mode, PortId, StreamDescription, ValidatedConfig};

#[derive(Default)]
struct Recorder(Mutex<Vec<(PortId, Vec<u8>, u64)>>);

impl TxChannel for Recorder {
    fn transmit(&self, port: PortId, frame: Vec<u8>, tx_ts: u64) {
        self.0.lock().unwrap().push((port, frame, tx_ts));
    }
}

fn cfg(streams: Vec<StreamDescription>) -> ValidatedConfig {
    validate_config(
        &GenerationConfig {
            streams,
            port_configs: Vec::new(),
        },
        DeviceProfile::Gen2,
    )
    .unwrap()
}

fn stream(id: u8, size: u32, rate: f64, port: u16) -> StreamDescription {
    StreamDescription {
        stream_id: id,
        frame_size: size,
        target_rate_l1: rate,
        tx_ports: vec![PortId(port)],
        ..default_stream()
    }
}

fn clock() -> Arc<dyn Clock> {
    Arc::new(MonotonicClock::new())
}

fn run(c: &ValidatedConfig, ms: u64, seed: u64) -> (Arc<Recorder>, swtg_core::pacing::TxSummary) {
    let rec = Arc::new(Recorder::default());
    let mut h = engine::start(
        c,
        rec.clone(),
        clock(),
        &PortRegistry::default(),
        EngineOptions {
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    thread::sleep(Duration::from_millis(ms));
    (rec, h.stop().unwrap())
}

#[test]
fn second_start_on_busy_port_fails() {
    let reg = PortRegistry::default();
    let rec: Arc<dyn TxChannel> = Arc::new(Recorder::default());
    let c = cfg(vec![stream(1, 64, 1e6, 2)]);
    let mut h = engine::start(&c, rec.clone(), clock(), &reg, EngineOptions::default()).unwrap();
    assert!(reg.is_active(PortId(2)));
    match engine::start(&c, rec.clone(), clock(), &reg, EngineOptions::default()) {
        Err(EngineError::AlreadyRunning(p)) => assert_eq!(p, PortId(2)),
        other => panic!("expected AlreadyRunning, got {:?}", other.err()),
    }
    // a disjoint port is fine
    let other = cfg(vec![stream(1, 64, 1e6, 3)]);
    let mut h2 = engine::start(&other, rec.clone(), clock(), &reg, EngineOptions::default()).unwrap();
    h.stop().unwrap();
    h2.stop().unwrap();
    assert!(!reg.is_active(PortId(2)));
    engine::start(&c, rec, clock(), &reg, EngineOptions::default()).unwrap();
}

#[test]
fn double_stop_is_not_running() {
    let rec: Arc<dyn TxChannel> = Arc::new(Recorder::default());
    let c = cfg(vec![stream(1, 64, 1e6, 0)]);
    let mut h = engine::start(&c, rec, clock(), &PortRegistry::default(), EngineOptions::default()).unwrap();
    assert!(h.is_running());
    h.stop().unwrap();
    assert!(!h.is_running());
    assert!(matches!(h.stop(), Err(EngineError::NotRunning)));
}

#[test]
fn summary_counts_match_transmitted_frames() {
    let c = cfg(vec![stream(1, 512, 10e6, 0), stream(2, 128, 4e6, 1)]);
    let (rec, summary) = run(&c, 300, 0);
    let sent = rec.0.lock().unwrap();
    for s in &summary.streams {
        let frames: Vec<&Vec<u8>> = sent
            .iter()
            .filter(|(p, _, _)| *p == s.port)
            .map(|(_, f, _)| f)
            .collect();
        assert_eq!(s.frames, frames.len() as u64);
        let l2: u64 = frames.iter().map(|f| (f.len() as u32 + FCS_LEN) as u64).sum();
        assert_eq!(s.bytes_l2, l2);
        assert_eq!(s.bytes_l1, l2 + 20 * s.frames);
        // seq 0..n, last frame flagged
        let parsed: Vec<_> = frames.iter().map(|f| decode_frame(f).unwrap()).collect();
        assert!(parsed.iter().enumerate().all(|(i, p)| p.seq == i as u64));
        assert!(parsed.last().unwrap().is_last());
        assert_eq!(parsed.iter().filter(|p| p.is_last()).count(), 1);
    }
    assert_eq!(summary.frames(), sent.len() as u64);
    // 10 Mb/s at 532 B L1 is ~2350 frames/s
    let s1 = summary.for_stream(1).next().unwrap().frames as f64;
    assert!((s1 - 705.0).abs() < 120.0, "{s1}");
}

#[test]
fn tx_timestamps_are_non_decreasing() {
    let c = cfg(vec![stream(1, 64, 20e6, 0)]);
    let (rec, _) = run(&c, 200, 0);
    let sent = rec.0.lock().unwrap();
    assert!(sent.windows(2).all(|w| w[0].2 <= w[1].2));
    for (_, f, ts) in sent.iter() {
        assert_eq!(decode_frame(f).unwrap().tx_ts, ts & ((1 << 48) - 1));
    }
}

/// Frame bytes with the 48-bit tx timestamp and the UDP checksum zeroed.
fn without_ts(f: &[u8]) -> Vec<u8> {
    let magic = MAGIC.to_be_bytes();
    let at = f.windows(4).position(|w| w == magic).unwrap();
    let mut out = f.to_vec();
    out[at + 12..at + 18].fill(0);
    out[at - 2..at].fill(0);
    out
}

#[test]
fn content_does_not_depend_on_timing_mode() {
    let mut s = stream(1, 200, 5e6, 0);
    s.l3 = match s.l3 {
        swtg_core::model::L3Spec::Ipv4(mut v4) => {
            v4.src_random_mask = "0.0.255.255".parse().unwrap();
            swtg_core::model::L3Spec::Ipv4(v4)
        }
        other => other,
    };
    let (cbr, _) = run(&cfg(vec![s.clone()]), 200, 7);
    s.mode = Mode::Poisson;
    let (poi, _) = run(&cfg(vec![s]), 200, 7);
    let a = cbr.0.lock().unwrap();
    let b = poi.0.lock().unwrap();
    let n = a.len().min(b.len()) - 1;
    assert!(n > 100);
    for i in 0..n {
        assert_eq!(without_ts(&a[i].1), without_ts(&b[i].1), "frame {i}");
    }
}

#[test]
fn records_and_hook_see_every_frame() {
    let seen = Arc::new(Mutex::new(0u64));
    let s2 = seen.clone();
    let rec = Arc::new(Recorder::default());
    let mut h = engine::start(
        &cfg(vec![stream(1, 64, 2e6, 0)]),
        rec.clone(),
        clock(),
        &PortRegistry::default(),
        EngineOptions {
            seed: 0,
            record_log: true,
            tx_hook: Some(Arc::new(move |_| *s2.lock().unwrap() += 1)),
        },
    )
    .unwrap();
    thread::sleep(Duration::from_millis(100));
    let summary = h.stop().unwrap();
    assert_eq!(h.records().len() as u64, summary.frames());
    assert_eq!(*seen.lock().unwrap(), summary.frames());
    assert!(h.started_ns() <= h.records()[0].tx_ts);
}
