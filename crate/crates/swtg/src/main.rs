use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use clap::{Parser, ValueEnum};
use swtg::channel::{Channel, LoopbackChannel, SocketChannel, DEFAULT_SOCKET_PORT};
use swtg::clock::{Clock, MonotonicClock};
use swtg::orchestrator::{Orchestrator, OrchestratorOptions};
use swtg::pcap::PcapWriter;
use swtg::runtime::LiveRuntime;
use swtg_core::impair::ImpairmentSpec;
use swtg_core::{DeviceProfile, PortId};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ChannelMode {
    Loopback,
    Socket,
}

/// Software traffic generator with a REST control plane.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Address of the HTTP API.
    #[arg(long, env = "SWTG_LISTEN", default_value = "0.0.0.0:8000")]
    listen: SocketAddr,

    #[arg(long, value_enum, default_value = "loopback")]
    mode: ChannelMode,

    /// JSON impairment spec for the loopback channel.
    #[arg(long)]
    impair: Option<PathBuf>,

    /// Device feature set used for validation.
    #[arg(long, default_value = "gen2")]
    profile_caps: DeviceProfile,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of ports, numbered from 0.
    #[arg(long, default_value_t = 4)]
    ports: u16,

    /// Socket mode: local UDP address.
    #[arg(long, default_value_t = SocketAddr::from(([0, 0, 0, 0], DEFAULT_SOCKET_PORT)))]
    bind: SocketAddr,

    /// Socket mode: peer UDP address.
    #[arg(long)]
    remote: Option<SocketAddr>,

    /// Write every transmitted frame to this pcap file.
    #[arg(long)]
    pcap: Option<PathBuf>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());

    let channel: Arc<dyn Channel> = match args.mode {
        ChannelMode::Loopback => {
            let spec: ImpairmentSpec = match &args.impair {
                Some(path) => serde_json::from_reader(File::open(path)?)?,
                None => ImpairmentSpec::default(),
            };
            Arc::new(LoopbackChannel::open(spec, args.seed, clock.clone())?)
        }
        ChannelMode::Socket => {
            let remote = args.remote.ok_or("--remote is required in socket mode")?;
            if args.impair.is_some() {
                tracing::warn!("--impair only applies to the loopback channel, ignored");
            }
            Arc::new(SocketChannel::open(args.bind, remote, PortId(0), clock.clone())?)
        }
    };

    let pcap = match &args.pcap {
        Some(path) => {
            let writer = Arc::new(Mutex::new(PcapWriter::new(BufWriter::new(File::create(path)?))?));
            let w = writer.clone();
            channel.add_tap(Arc::new(move |_, frame, ts| {
                let _ = w.lock().unwrap().write_frame(ts, frame);
            }));
            Some(writer)
        }
        None => None,
    };

    let ports: Vec<PortId> = (0..args.ports.max(1)).map(PortId).collect();
    let runtime = LiveRuntime::new(channel, clock, &ports, args.seed);
    let orch = Orchestrator::new(
        runtime,
        OrchestratorOptions {
            profile: args.profile_caps,
            ..Default::default()
        },
    );

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, swtg::http::router(orch))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    if let Some(w) = pcap {
        w.lock().unwrap().flush()?;
    }
    Ok(())
}
