//! Software traffic generator: live engine, transports, control plane and
//! file formats on top of `swtg-core`.

pub mod channel;
pub mod clock;
pub mod engine;
pub mod http;
pub mod orchestrator;
pub mod pcap;
pub mod report;
pub mod runtime;
pub mod schema;
pub mod timeseries;

pub use swtg_core as core;
