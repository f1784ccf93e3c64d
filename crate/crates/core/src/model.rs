//! Configuration model: streams, encapsulation stacks, ports and the rules
//! that decide whether a configuration can be generated.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::net::{Ipv4Addr, Ipv6Addr};
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec;

pub const MIN_FRAME_SIZE: u32 = 64;
pub const MAX_FRAME_SIZE: u32 = 9000;
pub const MAX_CBR_STREAMS: usize = 7;
pub const MAX_MPLS_LSES: usize = 15;
pub const MAX_SRV6_SEGMENTS: usize = 3;
pub const MAX_IPV6_RANDOM_BITS: u32 = 48;
pub const DEFAULT_UDP_PORT: u16 = 50083;

/// 48-bit Ethernet address, written as `aa:bb:cc:dd:ee:ff` in JSON.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);
    pub const ZERO: MacAddr = MacAddr([0; 6]);

    pub const fn new(a: u8, b: u8, c: u8, d: u8, e: u8, f: u8) -> Self {
        MacAddr([a, b, c, d, e, f])
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseMacError;

impl fmt::Display for ParseMacError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid MAC address")
    }
}

impl FromStr for MacAddr {
    type Err = ParseMacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let part = parts.next().ok_or(ParseMacError)?;
            if part.len() != 2 {
                return Err(ParseMacError);
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| ParseMacError)?;
        }
        if parts.next().is_some() {
            return Err(ParseMacError);
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = MacAddr;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a MAC address like aa:bb:cc:dd:ee:ff")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<MacAddr, E> {
                v.parse().map_err(|_| E::custom(format!("invalid MAC address `{v}`")))
            }
        }
        deserializer.deserialize_str(Visitor)
    }
}

/// Front-panel port number.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PortId(pub u16);

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Cbr,
    Poisson,
}

/// Capability profile of the generator instance. SRv6 needs `Gen2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceProfile {
    Gen1,
    #[default]
    Gen2,
}

impl FromStr for DeviceProfile {
    type Err = ParseProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gen1" => Ok(DeviceProfile::Gen1),
            "gen2" => Ok(DeviceProfile::Gen2),
            _ => Err(ParseProfileError),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseProfileError;

impl fmt::Display for ParseProfileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected `gen1` or `gen2`")
    }
}

impl core::error::Error for ParseProfileError {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EthernetSpec {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipv4Spec {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    #[serde(default = "unspecified_v4")]
    pub src_random_mask: Ipv4Addr,
    #[serde(default = "unspecified_v4")]
    pub dst_random_mask: Ipv4Addr,
    #[serde(default)]
    pub tos: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipv6Spec {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    #[serde(default = "unspecified_v6")]
    pub src_random_mask: Ipv6Addr,
    #[serde(default = "unspecified_v6")]
    pub dst_random_mask: Ipv6Addr,
    #[serde(default)]
    pub traffic_class: u8,
    #[serde(default)]
    pub flow_label: u32,
}

fn unspecified_v4() -> Ipv4Addr {
    Ipv4Addr::UNSPECIFIED
}

fn unspecified_v6() -> Ipv6Addr {
    Ipv6Addr::UNSPECIFIED
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "version", rename_all = "lowercase")]
pub enum L3Spec {
    Ipv4(Ipv4Spec),
    Ipv6(Ipv6Spec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlanTag {
    #[serde(default)]
    pub pcp: u8,
    #[serde(default)]
    pub dei: bool,
    pub vid: u16,
}

impl VlanTag {
    pub fn tci(&self) -> u16 {
        (u16::from(self.pcp & 0x7) << 13) | (u16::from(self.dei) << 12) | (self.vid & 0x0fff)
    }

    pub fn from_tci(tci: u16) -> Self {
        VlanTag {
            pcp: (tci >> 13) as u8,
            dei: tci & 0x1000 != 0,
            vid: tci & 0x0fff,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QinQ {
    pub outer: VlanTag,
    pub inner: VlanTag,
}

/// One MPLS label stack entry. The bottom-of-stack bit is derived from the
/// entry's position when encoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MplsLse {
    pub label: u32,
    #[serde(default)]
    pub tc: u8,
    #[serde(default = "default_ttl")]
    pub ttl: u8,
}

fn default_ttl() -> u8 {
    64
}

/// SRv6 encapsulation: outer IPv6 base header plus a segment routing header.
/// `segments` are listed in traversal order (first segment visited first).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Srv6Spec {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub segments: Vec<Ipv6Addr>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VxlanSpec {
    pub eth: EthernetSpec,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    #[serde(default = "default_vxlan_src_port")]
    pub udp_src_port: u16,
    pub vni: u32,
}

fn default_vxlan_src_port() -> u16 {
    49152
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncapsulationStack {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vlan: Option<VlanTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qinq: Option<QinQ>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mpls: Vec<MplsLse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srv6: Option<Srv6Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vxlan: Option<VxlanSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdpPorts {
    pub src: u16,
    pub dst: u16,
}

impl Default for UdpPorts {
    fn default() -> Self {
        UdpPorts {
            src: DEFAULT_UDP_PORT,
            dst: DEFAULT_UDP_PORT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamDescription {
    pub stream_id: u8,
    #[serde(default)]
    pub mode: Mode,
    /// Bits per second including preamble and inter-frame gap.
    pub target_rate_l1: f64,
    /// Bytes on the wire including the FCS.
    pub frame_size: u32,
    pub eth: EthernetSpec,
    pub l3: L3Spec,
    #[serde(default)]
    pub encap: EncapsulationStack,
    #[serde(default)]
    pub udp: UdpPorts,
    pub tx_ports: Vec<PortId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortConfig {
    pub port_id: PortId,
    #[serde(default)]
    pub arp_reply_enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arp_reply_mac: Option<MacAddr>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    #[serde(default)]
    pub streams: Vec<StreamDescription>,
    #[serde(default)]
    pub port_configs: Vec<PortConfig>,
}

/// A configuration that passed [`validate_config`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedConfig(GenerationConfig);

impl ValidatedConfig {
    pub fn config(&self) -> &GenerationConfig {
        &self.0
    }

    pub fn streams(&self) -> &[StreamDescription] {
        &self.0.streams
    }

    pub fn into_inner(self) -> GenerationConfig {
        self.0
    }
}

impl core::ops::Deref for ValidatedConfig {
    type Target = GenerationConfig;

    fn deref(&self) -> &GenerationConfig {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("{count} streams configured, at most {MAX_CBR_STREAMS} CBR or one Poisson stream allowed")]
    TooManyStreams { count: usize },
    #[error("CBR and Poisson streams cannot be mixed")]
    MixedModes,
    #[error("stream {stream_id}: id must be in 1..=255")]
    InvalidStreamId { stream_id: u8 },
    #[error("stream id {stream_id} is used more than once")]
    DuplicateStreamId { stream_id: u8 },
    #[error("stream {stream_id}: target rate must be positive and finite")]
    InvalidRate { stream_id: u8 },
    #[error("stream {stream_id}: no TX port configured")]
    NoTxPorts { stream_id: u8 },
    #[error("stream {stream_id}: frame size {frame_size} outside {MIN_FRAME_SIZE}..={MAX_FRAME_SIZE}")]
    FrameSizeOutOfRange { stream_id: u8, frame_size: u32 },
    #[error("stream {stream_id}: frame size {frame_size} cannot hold {required} bytes of headers and FCS")]
    FrameSmallerThanHeaders {
        stream_id: u8,
        frame_size: u32,
        required: u32,
    },
    #[error("stream {stream_id}: VLAN and QinQ are mutually exclusive")]
    VlanAndQinq { stream_id: u8 },
    #[error("stream {stream_id}: {count} MPLS label stack entries, at most {MAX_MPLS_LSES}")]
    TooManyLses { stream_id: u8, count: usize },
    #[error("stream {stream_id}: {count} SRv6 segments, expected 1..={MAX_SRV6_SEGMENTS}")]
    TooManySegments { stream_id: u8, count: usize },
    #[error("stream {stream_id}: SRv6 cannot be combined with VxLAN")]
    Srv6WithVxlan { stream_id: u8 },
    #[error("stream {stream_id}: SRv6 requires the gen2 device profile")]
    Srv6NotSupportedByProfile { stream_id: u8 },
    #[error("stream {stream_id}: {field} randomizes {bits} bits, at most {MAX_IPV6_RANDOM_BITS}")]
    RandomMaskTooWide {
        stream_id: u8,
        field: &'static str,
        bits: u32,
    },
    #[error("stream {stream_id}: {field} out of range")]
    FieldOutOfRange { stream_id: u8, field: &'static str },
    #[error("port {port}: ARP replies enabled without a reply MAC")]
    MissingArpMac { port: PortId },
}

impl ValidationError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        use ValidationError::*;
        match self {
            TooManyStreams { .. } => "TooManyStreams",
            MixedModes => "MixedModes",
            InvalidStreamId { .. } => "InvalidStreamId",
            DuplicateStreamId { .. } => "DuplicateStreamId",
            InvalidRate { .. } => "InvalidRate",
            NoTxPorts { .. } => "NoTxPorts",
            FrameSizeOutOfRange { .. } => "FrameSizeOutOfRange",
            FrameSmallerThanHeaders { .. } => "FrameSmallerThanHeaders",
            VlanAndQinq { .. } => "VlanAndQinq",
            TooManyLses { .. } => "TooManyLses",
            TooManySegments { .. } => "TooManySegments",
            Srv6WithVxlan { .. } => "Srv6WithVxlan",
            Srv6NotSupportedByProfile { .. } => "Srv6NotSupportedByProfile",
            RandomMaskTooWide { .. } => "RandomMaskTooWide",
            FieldOutOfRange { .. } => "FieldOutOfRange",
            MissingArpMac { .. } => "MissingArpMac",
        }
    }

    /// Path of the offending element inside the configuration document.
    pub fn path(&self, cfg: &GenerationConfig) -> String {
        use ValidationError::*;
        let stream_index = |id: u8| {
            cfg.streams
                .iter()
                .position(|s| s.stream_id == id)
                .map(|i| format!("streams[{i}]"))
                .unwrap_or_else(|| String::from("streams"))
        };
        match self {
            TooManyStreams { .. } | MixedModes => String::from("streams"),
            DuplicateStreamId { stream_id } => {
                let idx = cfg
                    .streams
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.stream_id == *stream_id)
                    .nth(1)
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                format!("streams[{idx}].stream_id")
            }
            InvalidStreamId { stream_id } => format!("{}.stream_id", stream_index(*stream_id)),
            InvalidRate { stream_id } => format!("{}.target_rate_l1", stream_index(*stream_id)),
            NoTxPorts { stream_id } => format!("{}.tx_ports", stream_index(*stream_id)),
            FrameSizeOutOfRange { stream_id, .. } | FrameSmallerThanHeaders { stream_id, .. } => {
                format!("{}.frame_size", stream_index(*stream_id))
            }
            VlanAndQinq { stream_id } => format!("{}.encap.qinq", stream_index(*stream_id)),
            TooManyLses { stream_id, .. } => format!("{}.encap.mpls", stream_index(*stream_id)),
            TooManySegments { stream_id, .. } | Srv6NotSupportedByProfile { stream_id } => {
                format!("{}.encap.srv6", stream_index(*stream_id))
            }
            Srv6WithVxlan { stream_id } => format!("{}.encap.vxlan", stream_index(*stream_id)),
            RandomMaskTooWide {
                stream_id, field, ..
            }
            | FieldOutOfRange { stream_id, field } => {
                format!("{}.{field}", stream_index(*stream_id))
            }
            MissingArpMac { port } => {
                let idx = cfg
                    .port_configs
                    .iter()
                    .position(|p| p.port_id == *port)
                    .unwrap_or(0);
                format!("port_configs[{idx}].arp_reply_mac")
            }
        }
    }
}

/// Checks every configuration rule and returns the first violation.
///
/// Rules are checked in a fixed order: stream-count and mode limits, stream
/// ids, then each stream in list order (structure before sizes), then ports.
pub fn validate_config(
    cfg: &GenerationConfig,
    profile: DeviceProfile,
) -> Result<ValidatedConfig, ValidationError> {
    let poisson = cfg
        .streams
        .iter()
        .filter(|s| s.mode == Mode::Poisson)
        .count();
    let cbr = cfg.streams.len() - poisson;
    if poisson > 0 && cbr > 0 {
        return Err(ValidationError::MixedModes);
    }
    if cbr > MAX_CBR_STREAMS || poisson > 1 {
        return Err(ValidationError::TooManyStreams {
            count: cfg.streams.len(),
        });
    }

    let mut seen = [false; 256];
    for s in &cfg.streams {
        if s.stream_id == 0 {
            return Err(ValidationError::InvalidStreamId { stream_id: 0 });
        }
        if core::mem::replace(&mut seen[usize::from(s.stream_id)], true) {
            return Err(ValidationError::DuplicateStreamId {
                stream_id: s.stream_id,
            });
        }
    }

    for s in &cfg.streams {
        validate_stream(s, profile)?;
    }

    for p in &cfg.port_configs {
        if p.arp_reply_enabled && p.arp_reply_mac.is_none() {
            return Err(ValidationError::MissingArpMac { port: p.port_id });
        }
    }

    Ok(ValidatedConfig(cfg.clone()))
}

fn validate_stream(s: &StreamDescription, profile: DeviceProfile) -> Result<(), ValidationError> {
    let id = s.stream_id;
    let range = |ok: bool, field: &'static str| {
        if ok {
            Ok(())
        } else {
            Err(ValidationError::FieldOutOfRange {
                stream_id: id,
                field,
            })
        }
    };

    if !(s.target_rate_l1.is_finite() && s.target_rate_l1 > 0.0) {
        return Err(ValidationError::InvalidRate { stream_id: id });
    }
    if s.tx_ports.is_empty() {
        return Err(ValidationError::NoTxPorts { stream_id: id });
    }
    if !(MIN_FRAME_SIZE..=MAX_FRAME_SIZE).contains(&s.frame_size) {
        return Err(ValidationError::FrameSizeOutOfRange {
            stream_id: id,
            frame_size: s.frame_size,
        });
    }

    let encap = &s.encap;
    if encap.vlan.is_some() && encap.qinq.is_some() {
        return Err(ValidationError::VlanAndQinq { stream_id: id });
    }
    if encap.mpls.len() > MAX_MPLS_LSES {
        return Err(ValidationError::TooManyLses {
            stream_id: id,
            count: encap.mpls.len(),
        });
    }
    if let Some(srv6) = &encap.srv6 {
        if srv6.segments.is_empty() || srv6.segments.len() > MAX_SRV6_SEGMENTS {
            return Err(ValidationError::TooManySegments {
                stream_id: id,
                count: srv6.segments.len(),
            });
        }
        if encap.vxlan.is_some() {
            return Err(ValidationError::Srv6WithVxlan { stream_id: id });
        }
        if profile != DeviceProfile::Gen2 {
            return Err(ValidationError::Srv6NotSupportedByProfile { stream_id: id });
        }
    }

    if let L3Spec::Ipv6(v6) = &s.l3 {
        for (field, mask) in [
            ("l3.src_random_mask", v6.src_random_mask),
            ("l3.dst_random_mask", v6.dst_random_mask),
        ] {
            let bits = u128::from(mask).count_ones();
            if bits > MAX_IPV6_RANDOM_BITS {
                return Err(ValidationError::RandomMaskTooWide {
                    stream_id: id,
                    field,
                    bits,
                });
            }
        }
        range(v6.flow_label < (1 << 20), "l3.flow_label")?;
    }

    for tag in encap.vlan.iter() {
        range(tag.vid < 4096 && tag.pcp < 8, "encap.vlan")?;
    }
    for q in encap.qinq.iter() {
        range(
            q.outer.vid < 4096 && q.outer.pcp < 8 && q.inner.vid < 4096 && q.inner.pcp < 8,
            "encap.qinq",
        )?;
    }
    for lse in &encap.mpls {
        range(lse.label < (1 << 20) && lse.tc < 8, "encap.mpls")?;
    }
    if let Some(vx) = &encap.vxlan {
        range(vx.vni < (1 << 24), "encap.vxlan.vni")?;
    }

    let required = codec::header_overhead(s) + codec::FCS_LEN;
    if s.frame_size < required {
        return Err(ValidationError::FrameSmallerThanHeaders {
            stream_id: id,
            frame_size: s.frame_size,
            required,
        });
    }
    Ok(())
}
