use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::impair::{LogEntry, Verdict};
use crate::model::fixtures::{config, ipv4_stream};
use crate::model::{validate_config, DeviceProfile, Mode};

fn cfg(streams: Vec<crate::model::StreamDescription>) -> ValidatedConfig {
    validate_config(&config(streams), DeviceProfile::Gen2).unwrap()
}

/// Arrival order implied by the channel log: delivered entries sorted by
/// delivery time, ties in offer order.
fn arrival_order(entries: &[LogEntry], stream_id: u8) -> Vec<u64> {
    let mut d: Vec<(u64, usize, u64)> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.stream_id == stream_id)
        .filter_map(|(i, e)| e.deliver_ns.map(|t| (t, i, e.seq)))
        .collect();
    d.sort();
    d.into_iter().map(|x| x.2).collect()
}

#[test]
fn lossless_run_conserves_frames() {
    let c = cfg(vec![ipv4_stream(1, 512, 10e6), ipv4_stream(2, 128, 5e6)]);
    let out = simulate(&c, 1_000_000_000, &SimConfig { tx_log: true, ..Default::default() }).unwrap();
    let snap = out.snapshot();
    for id in [1u8, 2] {
        let tx = out.tx.for_stream(id).map(|s| s.frames).sum::<u64>();
        let s = snap.stream(id).unwrap();
        assert_eq!(s.rx.frames, tx);
        assert_eq!((s.lost, s.out_of_order, s.duplicates), (0, 0, 0));
        let seqs: Vec<u64> = out.tx_log.iter().filter(|r| r.stream_id == id).map(|r| r.seq).collect();
        assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
        assert_eq!(seqs.len() as u64 + 1, tx, "closing frame is counted");
    }
    assert!(out.analyzer.last_seen(1) && out.analyzer.last_seen(2));
}

#[test]
fn one_second_at_10m_sends_2350_frames() {
    let c = cfg(vec![ipv4_stream(1, 512, 10e6)]);
    let out = simulate(&c, 1_000_000_000, &SimConfig::default()).unwrap();
    let s = &out.tx.streams[0];
    assert!(s.frames - 1 == 2349 || s.frames - 1 == 2350);
    assert_eq!(s.bytes_l2, s.frames * 512);
    assert_eq!(s.bytes_l1, s.frames * 532);
}

#[test]
fn loss_matches_channel_log() {
    for p in [0.001, 0.01, 0.1] {
        let c = cfg(vec![ipv4_stream(1, 64, 100e6)]);
        let sim = SimConfig {
            impairment: ImpairmentSpec { drop_probability: p, ..Default::default() },
            seed: 5,
            log: true,
            ..Default::default()
        };
        let out = simulate(&c, 100_000_000, &sim).unwrap();
        let log = out.channel_log.as_ref().unwrap();
        let lost = out.snapshot().stream(1).unwrap().lost;
        assert_eq!(lost, log.dropped(1), "p={p}");
        assert!(lost > 0);
    }
}

#[test]
fn out_of_order_matches_replay_of_delivery_log() {
    let c = cfg(vec![ipv4_stream(1, 64, 50e6)]);
    let sim = SimConfig {
        impairment: ImpairmentSpec {
            reorder_probability: 0.05,
            reorder_extra_delay_ns: 50_000,
            ..Default::default()
        },
        seed: 1,
        log: true,
        ..Default::default()
    };
    let out = simulate(&c, 50_000_000, &sim).unwrap();
    let log = out.channel_log.unwrap();
    assert!(log.entries.iter().any(|e| e.verdict == Verdict::Reordered));
    let mut max = None;
    let mut ooo = 0;
    let mut seen = BTreeSet::new();
    for s in arrival_order(&log.entries, 1) {
        if seen.insert(s) && max.is_some_and(|m| s < m) {
            ooo += 1;
        }
        max = max.max(Some(s));
    }
    assert!(ooo > 0);
    assert_eq!(out.analyzer.snapshot(0).stream(1).unwrap().out_of_order, ooo);
}

#[test]
fn fixed_delay_bounds_rtt() {
    let c = cfg(vec![ipv4_stream(1, 64, 10e6)]);
    let sim = SimConfig {
        impairment: ImpairmentSpec { delay_ns: 5_000_000, ..Default::default() },
        ..Default::default()
    };
    let rtt = simulate(&c, 100_000_000, &sim).unwrap().snapshot().stream(1).unwrap().rtt;
    assert_eq!((rtt.min_ns, rtt.max_ns), (5_000_000, 5_000_000));
}

#[test]
fn same_seed_same_result() {
    let mut s = ipv4_stream(1, 100, 20e6);
    s.mode = Mode::Poisson;
    let c = cfg(vec![s]);
    let sim = SimConfig {
        impairment: ImpairmentSpec { drop_probability: 0.05, jitter_ns: 1000, ..Default::default() },
        seed: 9,
        log: true,
        ..Default::default()
    };
    let a = simulate(&c, 20_000_000, &sim).unwrap();
    let b = simulate(&c, 20_000_000, &sim).unwrap();
    assert_eq!(a.channel_log, b.channel_log);
    assert_eq!(a.snapshot(), b.snapshot());
}

#[test]
fn runner_reports_blackout_gap() {
    let mut r = SimRunner::new(ImpairmentSpec::default(), 0);
    let out = r
        .run_trial(&Trial {
            stream: ipv4_stream(1, 64, 10e6),
            duration_ns: 1_000_000_000,
            blackout: Some(Blackout { start_ns: 200_000_000, duration_ns: 300_000_000 }),
        })
        .unwrap();
    let g = out.max_gap.unwrap();
    let period = crate::pacing::cbr_period(64, 10e6).unwrap();
    assert!(g.len_ns() >= 300_000_000 && (g.len_ns() as f64) <= 300e6 + period + 1.0);
    assert!(out.lost > 0);
}
