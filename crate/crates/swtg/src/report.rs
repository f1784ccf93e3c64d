//! Test results and their export formats.

use serde::{Deserialize, Serialize};
use swtg_core::analyzer::StatisticsSnapshot;
use swtg_core::impair::ImpairmentSpec;
use swtg_core::model::GenerationConfig;
use swtg_core::pacing::TxSummary;
use swtg_core::profiles::ProfileResult;

use crate::timeseries::TimeSeriesPoint;

pub const REPORT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub config: GenerationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impairment: Option<ImpairmentSpec>,
    /// Milliseconds since the Unix epoch.
    pub started_at_ms: u64,
    pub duration_requested_s: f64,
    pub duration_actual_s: f64,
    pub statistics: StatisticsSnapshot,
    pub tx: TxSummary,
    pub time_series: Vec<TimeSeriesPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub plan_id: u64,
    pub kind: String,
    pub tests: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileResult>,
}

pub const CSV_COLUMNS: [&str; 12] = [
    "test",
    "stream_id",
    "frames_tx",
    "frames_rx",
    "lost",
    "out_of_order",
    "rate_l1_tx",
    "rate_l1_rx",
    "rtt_mean_ns",
    "rtt_min_ns",
    "rtt_max_ns",
    "iat_mean_ns",
];

pub const PROFILE_CSV_COLUMNS: [&str; 4] = ["frame_size", "metric", "offered_rate", "value"];

impl Report {
    /// One row per (test, stream). Rates are run averages in bits/s.
    /// Profile reports use one row per (frame size, metric) instead.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if let Some(p) = &self.profile {
            write_profile(&mut w, p).expect("in-memory csv");
        } else {
            w.write_record(CSV_COLUMNS).expect("in-memory csv");
            for t in &self.tests {
                for s in &t.statistics.streams {
                    w.write_record([
                        t.name.clone(),
                        s.stream_id.to_string(),
                        s.tx.frames.to_string(),
                        s.rx.frames.to_string(),
                        s.lost.to_string(),
                        s.out_of_order.to_string(),
                        s.tx.mean_rate_l1.to_string(),
                        s.rx.mean_rate_l1.to_string(),
                        s.rtt.mean_ns.to_string(),
                        s.rtt.min_ns.to_string(),
                        s.rtt.max_ns.to_string(),
                        s.iat.mean_ns.to_string(),
                    ])
                    .expect("in-memory csv");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

fn write_profile(w: &mut csv::Writer<Vec<u8>>, p: &ProfileResult) -> csv::Result<()> {
    w.write_record(PROFILE_CSV_COLUMNS)?;
    let row = |w: &mut csv::Writer<Vec<u8>>, size: String, metric: &str, rate: String, value: String| {
        w.write_record([size, metric.to_string(), rate, value])
    };
    for s in &p.sizes {
        let size = s.frame_size.to_string();
        if let Some(t) = s.throughput {
            row(w, size.clone(), "throughput", String::new(), t.to_string())?;
        }
        if let Some(l) = &s.latency {
            let rate = s.throughput.map(|t| t.to_string()).unwrap_or_default();
            row(w, size.clone(), "latency_mean_ns", rate.clone(), l.mean_ns.to_string())?;
            row(w, size.clone(), "latency_min_ns", rate.clone(), l.min_ns.to_string())?;
            row(w, size.clone(), "latency_max_ns", rate, l.max_ns.to_string())?;
        }
        for lp in &s.loss_rate_curve {
            row(w, size.clone(), "loss_fraction", lp.offered_rate.to_string(), lp.loss_fraction.to_string())?;
        }
    }
    if let Some(r) = p.reset_time_s {
        row(w, String::new(), "reset_time_s", String::new(), r.to_string())?;
    }
    Ok(())
}
