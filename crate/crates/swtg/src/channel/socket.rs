use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use swtg_core::clock::Clock;
use swtg_core::model::MAX_FRAME_SIZE;
use swtg_core::PortId;

use super::{Channel, ChannelError, RxSink, Tap, TxChannel};

pub const DEFAULT_SOCKET_PORT: u16 = 50000;

const PREFIX_LEN: usize = 4;

struct Shared {
    sink: RwLock<Option<RxSink>>,
    taps: RwLock<Vec<Tap>>,
    stop: AtomicBool,
    clock: Arc<dyn Clock>,
    port: PortId,
}

/// One link carried over UDP: every datagram is a 4-byte big-endian length
/// followed by the frame. All ports transmit to `remote`; everything
/// received is delivered on the channel's own port.
pub struct SocketChannel {
    socket: UdpSocket,
    remote: SocketAddr,
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl SocketChannel {
    pub fn open(
        local: SocketAddr,
        remote: SocketAddr,
        port: PortId,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ChannelError> {
        if remote.port() == 0 || remote.ip().is_unspecified() {
            return Err(ChannelError::Unreachable(remote.to_string()));
        }
        let socket = UdpSocket::bind(local).map_err(|source| ChannelError::BindFailure {
            addr: local,
            source,
        })?;
        let recv = socket.try_clone().map_err(|source| ChannelError::BindFailure {
            addr: local,
            source,
        })?;
        recv.set_read_timeout(Some(Duration::from_millis(50)))
            .expect("non-zero timeout");
        let shared = Arc::new(Shared {
            sink: RwLock::new(None),
            taps: RwLock::new(Vec::new()),
            stop: AtomicBool::new(false),
            clock,
            port,
        });
        let worker = {
            let shared = shared.clone();
            thread::Builder::new()
                .name("socket-rx".into())
                .spawn(move || receive(&recv, &shared))
                .expect("spawn socket receiver")
        };
        Ok(SocketChannel {
            socket,
            remote,
            shared,
            worker: Some(worker),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.socket.local_addr().expect("bound socket")
    }
}

fn receive(socket: &UdpSocket, shared: &Shared) {
    let mut buf = vec![0u8; MAX_FRAME_SIZE as usize + 64];
    while !shared.stop.load(Ordering::Relaxed) {
        let Ok(n) = socket.recv(&mut buf) else {
            continue;
        };
        let rx_ts = shared.clock.now_ns();
        if n < PREFIX_LEN {
            continue;
        }
        let len = u32::from_be_bytes(buf[..PREFIX_LEN].try_into().unwrap()) as usize;
        if PREFIX_LEN + len != n {
            continue;
        }
        if let Some(sink) = shared.sink.read().unwrap().as_ref() {
            sink(shared.port, &buf[PREFIX_LEN..n], rx_ts);
        }
    }
}

impl TxChannel for SocketChannel {
    fn transmit(&self, port: PortId, frame: Vec<u8>, tx_ts: u64) {
        for tap in self.shared.taps.read().unwrap().iter() {
            tap(port, &frame, tx_ts);
        }
        let mut datagram = Vec::with_capacity(PREFIX_LEN + frame.len());
        datagram.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        datagram.extend_from_slice(&frame);
        // datagram semantics: an absent peer is not an error
        let _ = self.socket.send_to(&datagram, self.remote);
    }
}

impl Channel for SocketChannel {
    fn set_sink(&self, sink: Option<RxSink>) {
        *self.shared.sink.write().unwrap() = sink;
    }

    fn add_tap(&self, tap: Tap) {
        self.shared.taps.write().unwrap().push(tap);
    }

    fn inject(&self, port: PortId, frame: Vec<u8>) {
        if let Some(sink) = self.shared.sink.read().unwrap().as_ref() {
            sink(port, &frame, self.shared.clock.now_ns());
        }
    }
}

impl Drop for SocketChannel {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
