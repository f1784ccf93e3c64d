//! Frame transports. A channel carries encoded frames (FCS excluded) from
//! the generator to the receive path of a port.

mod loopback;
mod socket;

use std::io::Write;
use std::net::Ipv4Addr;
use std::sync::Arc;

use swtg_core::codec::encode_arp_request;
use swtg_core::impair::{ChannelLog, ImpairmentSpec};
use swtg_core::{MacAddr, PortId};

pub use loopback::LoopbackChannel;
pub use socket::{SocketChannel, DEFAULT_SOCKET_PORT};

/// Receives frames: (port, bytes, rx timestamp).
pub type RxSink = Arc<dyn Fn(PortId, &[u8], u64) + Send + Sync>;

/// Observes transmitted frames: (port, bytes, tx timestamp).
pub type Tap = Arc<dyn Fn(PortId, &[u8], u64) + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error(transparent)]
    InvalidSpec(#[from] swtg_core::impair::ImpairError),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
    #[error("remote {0} is not reachable")]
    Unreachable(String),
    #[error("operation not supported by this channel")]
    Unsupported,
}

/// Transmit side, all the generator needs.
pub trait TxChannel: Send + Sync {
    fn transmit(&self, port: PortId, frame: Vec<u8>, tx_ts: u64);
}

pub trait Channel: TxChannel {
    /// Replaces the receive sink. Frames arriving without a sink are
    /// discarded.
    fn set_sink(&self, sink: Option<RxSink>);

    fn add_tap(&self, tap: Tap);

    /// Puts `frame` directly on the receive path of `port`.
    fn inject(&self, port: PortId, frame: Vec<u8>);

    /// Drops everything offered during the next `duration_ns`.
    fn trigger_blackout(&self, _duration_ns: u64) -> Result<(), ChannelError> {
        Err(ChannelError::Unsupported)
    }

    fn set_impairment(&self, _spec: ImpairmentSpec) -> Result<(), ChannelError> {
        Err(ChannelError::Unsupported)
    }

    /// Current impairment spec, `None` for real transports.
    fn impairment(&self) -> Option<ImpairmentSpec> {
        None
    }

    fn take_log(&self) -> Option<ChannelLog> {
        None
    }
}

/// Injects a who-has request for `target_ip` on `port`.
pub fn inject_arp_request(
    channel: &dyn Channel,
    port: PortId,
    target_ip: Ipv4Addr,
    requester_mac: MacAddr,
    requester_ip: Ipv4Addr,
) {
    channel.inject(port, encode_arp_request(requester_mac, requester_ip, target_ip));
}

/// Writes a channel log as CSV: stream_id, seq, verdict, enqueue_ns,
/// deliver_ns (empty for dropped frames).
pub fn write_log_csv<W: Write>(log: &ChannelLog, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stream_id", "seq", "verdict", "enqueue_ns", "deliver_ns"])?;
    for e in &log.entries {
        out.write_record([
            e.stream_id.to_string(),
            e.seq.to_string(),
            e.verdict.as_str().to_string(),
            e.enqueue_ns.to_string(),
            e.deliver_ns.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
