//! Wire encoder and decoder for generated frames.
//!
//! Frame layout, outermost first (every layer except Ethernet, UDP and the
//! measurement header is optional):
//!
//! ```text
//! [outer Eth | outer IPv4 | outer UDP 4789 | VxLAN]     VxLAN, 50 bytes
//! Eth [QinQ 88a8+8100 | VLAN 8100] [MPLS LSE x n]
//! IPv4 | IPv6 | IPv6 + SRH(type 4, n SIDs)
//! UDP | measurement header | random padding
//! ```
//!
//! Encoded buffers never contain the FCS: a frame of `frame_size` bytes is
//! `frame_size - 4` bytes long here.

mod arp;

pub use arp::{encode_arp_reply, encode_arp_request, ArpError, ArpPacket, ARP_REPLY, ARP_REQUEST};

use alloc::vec::Vec;
use core::net::{Ipv4Addr, Ipv6Addr};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::model::{L3Spec, MacAddr, MplsLse, StreamDescription, VlanTag};

pub const ETH_LEN: u32 = 14;
pub const VLAN_TAG_LEN: u32 = 4;
pub const MPLS_LSE_LEN: u32 = 4;
pub const IPV4_LEN: u32 = 20;
pub const IPV6_LEN: u32 = 40;
pub const SRH_FIXED_LEN: u32 = 8;
pub const SID_LEN: u32 = 16;
pub const UDP_LEN: u32 = 8;
pub const VXLAN_LEN: u32 = 8;
/// Outer Ethernet + outer IPv4 + outer UDP + VxLAN.
pub const VXLAN_OVERHEAD: u32 = ETH_LEN + IPV4_LEN + UDP_LEN + VXLAN_LEN;
pub const MEASUREMENT_LEN: u32 = 18;
pub const FCS_LEN: u32 = 4;
/// Preamble (8) plus inter-frame gap (12), counted per frame at L1.
pub const L1_OVERHEAD: u32 = 20;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_QINQ: u16 = 0x88a8;
pub const ETHERTYPE_IPV6: u16 = 0x86dd;
pub const ETHERTYPE_MPLS: u16 = 0x8847;

pub const IP_PROTO_UDP: u8 = 17;
pub const IPV6_NH_ROUTING: u8 = 43;
pub const ROUTING_TYPE_SRH: u8 = 4;
pub const VXLAN_UDP_PORT: u16 = 4789;

/// "P4TG" in ASCII.
pub const MAGIC: u32 = 0x5034_5447;
pub const FLAG_LAST: u8 = 0x01;

const U48_MASK: u64 = (1 << 48) - 1;
const MAX_NESTING: usize = 4;

/// In-band measurement record carried as the first bytes of the innermost
/// UDP payload.
///
/// ```text
///  0      4    5     6         12        18
///  | magic | id | flg | seq u48 | ts u48 |
/// ```
///
/// `seq` and `tx_ts` are truncated to 48 bits on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementHeader {
    pub stream_id: u8,
    pub flags: u8,
    pub seq: u64,
    pub tx_ts: u64,
}

impl MeasurementHeader {
    pub fn is_last(&self) -> bool {
        self.flags & FLAG_LAST != 0
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC.to_be_bytes());
        out.push(self.stream_id);
        out.push(self.flags);
        out.extend_from_slice(&(self.seq & U48_MASK).to_be_bytes()[2..]);
        out.extend_from_slice(&(self.tx_ts & U48_MASK).to_be_bytes()[2..]);
    }

    /// Parses a header from the start of `payload`; `None` when the magic
    /// does not match or the payload is too short.
    pub fn parse(payload: &[u8]) -> Option<Self> {
        if payload.len() < MEASUREMENT_LEN as usize || be32(payload, 0) != MAGIC {
            return None;
        }
        Some(MeasurementHeader {
            stream_id: payload[4],
            flags: payload[5],
            seq: be48(payload, 6),
            tx_ts: be48(payload, 12),
        })
    }
}

/// Difference `later - earlier` of two nanosecond timestamps, modulo the
/// 48-bit wire width of `tx_ts`.
pub fn ts_delta(later: u64, earlier: u64) -> u64 {
    later.wrapping_sub(earlier) & U48_MASK
}

/// Total header bytes of a stream's frames, FCS excluded.
pub fn header_overhead(desc: &StreamDescription) -> u32 {
    let encap = &desc.encap;
    let mut len = ETH_LEN;
    if encap.qinq.is_some() {
        len += 2 * VLAN_TAG_LEN;
    } else if encap.vlan.is_some() {
        len += VLAN_TAG_LEN;
    }
    len += MPLS_LSE_LEN * encap.mpls.len() as u32;
    len += match (&encap.srv6, &desc.l3) {
        (Some(srv6), _) => IPV6_LEN + SRH_FIXED_LEN + SID_LEN * srv6.segments.len() as u32,
        (None, L3Spec::Ipv4(_)) => IPV4_LEN,
        (None, L3Spec::Ipv6(_)) => IPV6_LEN,
    };
    len += UDP_LEN + MEASUREMENT_LEN;
    if encap.vxlan.is_some() {
        len += VXLAN_OVERHEAD;
    }
    len
}

/// Builds one frame of `desc.frame_size - 4` bytes.
///
/// Randomized address bits and the padding after the measurement header are
/// drawn from `rng`, in that order.
pub fn encode_frame<R: RngCore + ?Sized>(
    desc: &StreamDescription,
    seq: u64,
    tx_ts: u64,
    rng: &mut R,
) -> Vec<u8> {
    encode_frame_with_flags(desc, seq, tx_ts, 0, rng)
}

pub fn encode_frame_with_flags<R: RngCore + ?Sized>(
    desc: &StreamDescription,
    seq: u64,
    tx_ts: u64,
    flags: u8,
    rng: &mut R,
) -> Vec<u8> {
    let total = (desc.frame_size - FCS_LEN) as usize;
    debug_assert!(total >= header_overhead(desc) as usize);
    let mut buf = Vec::with_capacity(total);
    let encap = &desc.encap;

    if let Some(vx) = &encap.vxlan {
        put_eth(&mut buf, vx.eth.dst_mac, vx.eth.src_mac);
        put_u16(&mut buf, ETHERTYPE_IPV4);
        let ip_len = total - buf.len();
        put_ipv4(&mut buf, vx.src, vx.dst, 0, ip_len);
        let udp_len = total - buf.len();
        put_udp(&mut buf, vx.udp_src_port, VXLAN_UDP_PORT, udp_len);
        // flags: VNI present
        buf.extend_from_slice(&[0x08, 0, 0, 0]);
        buf.extend_from_slice(&(vx.vni << 8).to_be_bytes());
    }

    put_eth(&mut buf, desc.eth.dst_mac, desc.eth.src_mac);
    if let Some(q) = &encap.qinq {
        put_u16(&mut buf, ETHERTYPE_QINQ);
        put_u16(&mut buf, q.outer.tci());
        put_u16(&mut buf, ETHERTYPE_VLAN);
        put_u16(&mut buf, q.inner.tci());
    } else if let Some(v) = &encap.vlan {
        put_u16(&mut buf, ETHERTYPE_VLAN);
        put_u16(&mut buf, v.tci());
    }
    let l3_type = if encap.srv6.is_some() {
        ETHERTYPE_IPV6
    } else {
        match desc.l3 {
            L3Spec::Ipv4(_) => ETHERTYPE_IPV4,
            L3Spec::Ipv6(_) => ETHERTYPE_IPV6,
        }
    };
    put_u16(
        &mut buf,
        if encap.mpls.is_empty() {
            l3_type
        } else {
            ETHERTYPE_MPLS
        },
    );
    let depth = encap.mpls.len();
    for (i, lse) in encap.mpls.iter().enumerate() {
        put_lse(&mut buf, lse, i + 1 == depth);
    }

    // (pseudo-header source, destination) for the IPv6 UDP checksum
    let mut v6_pseudo = None;
    if let Some(srv6) = &encap.srv6 {
        let segs = srv6.segments.len();
        let srh_len = (SRH_FIXED_LEN + SID_LEN * segs as u32) as usize;
        let payload_len = total - buf.len() - IPV6_LEN as usize;
        put_ipv6(&mut buf, srv6.src, srv6.dst, 0, 0, IPV6_NH_ROUTING, payload_len);
        buf.push(IP_PROTO_UDP);
        buf.push(((srh_len - 8) / 8) as u8);
        buf.push(ROUTING_TYPE_SRH);
        buf.push((segs - 1) as u8); // segments left
        buf.push((segs - 1) as u8); // last entry
        buf.push(0); // flags
        put_u16(&mut buf, 0); // tag
        for sid in srv6.segments.iter().rev() {
            buf.extend_from_slice(&sid.octets());
        }
        let final_dst = srv6.segments[segs - 1];
        v6_pseudo = Some((srv6.src, final_dst));
    } else {
        match &desc.l3 {
            L3Spec::Ipv4(v4) => {
                let src = randomize_v4(v4.src, v4.src_random_mask, rng);
                let dst = randomize_v4(v4.dst, v4.dst_random_mask, rng);
                let ip_len = total - buf.len();
                put_ipv4(&mut buf, src, dst, v4.tos, ip_len);
            }
            L3Spec::Ipv6(v6) => {
                let src = randomize_v6(v6.src, v6.src_random_mask, rng);
                let dst = randomize_v6(v6.dst, v6.dst_random_mask, rng);
                let payload_len = total - buf.len() - IPV6_LEN as usize;
                put_ipv6(
                    &mut buf,
                    src,
                    dst,
                    v6.traffic_class,
                    v6.flow_label,
                    IP_PROTO_UDP,
                    payload_len,
                );
                v6_pseudo = Some((src, dst));
            }
        }
    }

    let udp_off = buf.len();
    put_udp(&mut buf, desc.udp.src, desc.udp.dst, total - udp_off);
    MeasurementHeader {
        stream_id: desc.stream_id,
        flags,
        seq,
        tx_ts,
    }
    .write(&mut buf);
    let pad_from = buf.len();
    buf.resize(total, 0);
    rng.fill_bytes(&mut buf[pad_from..]);

    if let Some((src, dst)) = v6_pseudo {
        let csum = udp6_checksum(src, dst, &buf[udp_off..]);
        buf[udp_off + 6..udp_off + 8].copy_from_slice(&csum.to_be_bytes());
    }
    buf
}

fn randomize_v4<R: RngCore + ?Sized>(base: Ipv4Addr, mask: Ipv4Addr, rng: &mut R) -> Ipv4Addr {
    let mask = u32::from(mask);
    if mask == 0 {
        return base;
    }
    Ipv4Addr::from((u32::from(base) & !mask) | (rng.next_u32() & mask))
}

fn randomize_v6<R: RngCore + ?Sized>(base: Ipv6Addr, mask: Ipv6Addr, rng: &mut R) -> Ipv6Addr {
    let mask = u128::from(mask);
    if mask == 0 {
        return base;
    }
    let r = (u128::from(rng.next_u64()) << 64) | u128::from(rng.next_u64());
    Ipv6Addr::from((u128::from(base) & !mask) | (r & mask))
}

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_be_bytes());
}

fn put_eth(buf: &mut Vec<u8>, dst: MacAddr, src: MacAddr) {
    buf.extend_from_slice(&dst.0);
    buf.extend_from_slice(&src.0);
}

fn put_lse(buf: &mut Vec<u8>, lse: &MplsLse, bottom: bool) {
    let word = ((lse.label & 0xf_ffff) << 12)
        | (u32::from(lse.tc & 0x7) << 9)
        | (u32::from(bottom) << 8)
        | u32::from(lse.ttl);
    buf.extend_from_slice(&word.to_be_bytes());
}

fn put_ipv4(buf: &mut Vec<u8>, src: Ipv4Addr, dst: Ipv4Addr, tos: u8, total_len: usize) {
    let start = buf.len();
    buf.extend_from_slice(&[0x45, tos]);
    put_u16(buf, total_len as u16);
    buf.extend_from_slice(&[0, 0, 0, 0, 64, IP_PROTO_UDP, 0, 0]);
    buf.extend_from_slice(&src.octets());
    buf.extend_from_slice(&dst.octets());
    let csum = !fold(sum_words(&buf[start..]));
    buf[start + 10..start + 12].copy_from_slice(&csum.to_be_bytes());
}

fn put_ipv6(
    buf: &mut Vec<u8>,
    src: Ipv6Addr,
    dst: Ipv6Addr,
    traffic_class: u8,
    flow_label: u32,
    next_header: u8,
    payload_len: usize,
) {
    let word = (6u32 << 28) | (u32::from(traffic_class) << 20) | (flow_label & 0xf_ffff);
    buf.extend_from_slice(&word.to_be_bytes());
    put_u16(buf, payload_len as u16);
    buf.push(next_header);
    buf.push(64);
    buf.extend_from_slice(&src.octets());
    buf.extend_from_slice(&dst.octets());
}

fn put_udp(buf: &mut Vec<u8>, src: u16, dst: u16, len: usize) {
    put_u16(buf, src);
    put_u16(buf, dst);
    put_u16(buf, len as u16);
    put_u16(buf, 0);
}

fn sum_words(data: &[u8]) -> u32 {
    let mut chunks = data.chunks_exact(2);
    let mut sum: u32 = chunks
        .by_ref()
        .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
        .sum();
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    sum
}

fn fold(mut sum: u32) -> u16 {
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// UDP checksum over the IPv6 pseudo-header; `segment` is the UDP header
/// (checksum field zero) plus payload.
pub fn udp6_checksum(src: Ipv6Addr, dst: Ipv6Addr, segment: &[u8]) -> u16 {
    let mut sum = sum_words(&src.octets()) + sum_words(&dst.octets());
    sum += segment.len() as u32 >> 16;
    sum += segment.len() as u32 & 0xffff;
    sum += u32::from(IP_PROTO_UDP);
    let data_sum = sum_words(&segment[..6]) + sum_words(&segment[8..]);
    let csum = !fold(sum + fold(data_sum) as u32);
    if csum == 0 {
        0xffff
    } else {
        csum
    }
}

/// IPv4 header checksum verification helper; true when the header sums to
/// all ones.
pub fn ipv4_checksum_ok(header: &[u8]) -> bool {
    fold(sum_words(header)) == 0xffff
}

fn be16(b: &[u8], off: usize) -> u16 {
    u16::from_be_bytes([b[off], b[off + 1]])
}

fn be32(b: &[u8], off: usize) -> u32 {
    u32::from_be_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn be48(b: &[u8], off: usize) -> u64 {
    let mut raw = [0u8; 8];
    raw[2..].copy_from_slice(&b[off..off + 6]);
    u64::from_be_bytes(raw)
}

fn mac_at(b: &[u8], off: usize) -> MacAddr {
    let mut m = [0u8; 6];
    m.copy_from_slice(&b[off..off + 6]);
    MacAddr(m)
}

fn v4_at(b: &[u8], off: usize) -> Ipv4Addr {
    Ipv4Addr::new(b[off], b[off + 1], b[off + 2], b[off + 3])
}

fn v6_at(b: &[u8], off: usize) -> Ipv6Addr {
    let mut a = [0u8; 16];
    a.copy_from_slice(&b[off..off + 16]);
    Ipv6Addr::from(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Ethernet,
    Vlan,
    Mpls,
    Ipv4,
    Ipv6,
    Srh,
    Udp,
    Vxlan,
    Arp,
    Measurement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    Ethernet {
        dst: MacAddr,
        src: MacAddr,
        ethertype: u16,
    },
    Vlan {
        tpid: u16,
        tag: VlanTag,
    },
    Mpls {
        lse: MplsLse,
        bottom_of_stack: bool,
    },
    Ipv4 {
        src: Ipv4Addr,
        dst: Ipv4Addr,
        tos: u8,
        ttl: u8,
        protocol: u8,
        total_len: u16,
    },
    Ipv6 {
        src: Ipv6Addr,
        dst: Ipv6Addr,
        traffic_class: u8,
        flow_label: u32,
        next_header: u8,
        payload_len: u16,
    },
    Srh {
        next_header: u8,
        segments_left: u8,
        last_entry: u8,
        /// Segment list in wire order (last segment to visit first).
        segments: Vec<Ipv6Addr>,
    },
    Udp {
        src_port: u16,
        dst_port: u16,
        length: u16,
        checksum: u16,
    },
    Vxlan {
        vni: u32,
    },
    Arp(ArpPacket),
    Measurement(MeasurementHeader),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Ethernet { .. } => LayerKind::Ethernet,
            Layer::Vlan { .. } => LayerKind::Vlan,
            Layer::Mpls { .. } => LayerKind::Mpls,
            Layer::Ipv4 { .. } => LayerKind::Ipv4,
            Layer::Ipv6 { .. } => LayerKind::Ipv6,
            Layer::Srh { .. } => LayerKind::Srh,
            Layer::Udp { .. } => LayerKind::Udp,
            Layer::Vxlan { .. } => LayerKind::Vxlan,
            Layer::Arp(_) => LayerKind::Arp,
            Layer::Measurement(_) => LayerKind::Measurement,
        }
    }
}

/// Result of decoding one received frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedFrame {
    pub stream_id: u8,
    pub seq: u64,
    pub tx_ts: u64,
    pub flags: u8,
    /// Length of the decoded buffer (FCS not included).
    pub frame_size: u32,
    pub layers: Vec<Layer>,
    pub is_p4tg: bool,
}

impl ParsedFrame {
    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(Layer::kind).collect()
    }

    pub fn measurement(&self) -> Option<MeasurementHeader> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Measurement(m) => Some(*m),
            _ => None,
        })
    }

    pub fn arp(&self) -> Option<&ArpPacket> {
        self.layers.iter().find_map(|l| match l {
            Layer::Arp(a) => Some(a),
            _ => None,
        })
    }

    pub fn is_last(&self) -> bool {
        self.is_p4tg && self.flags & FLAG_LAST != 0
    }

    /// On-wire size including the FCS.
    pub fn wire_size(&self) -> u32 {
        self.frame_size + FCS_LEN
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("frame truncated inside {layer:?} header at offset {offset}")]
    TruncatedFrame { layer: LayerKind, offset: usize },
}

/// Decodes the full layer stack of `bytes` (no FCS).
///
/// Frames whose innermost UDP payload does not start with the measurement
/// magic come back with `is_p4tg == false`, decoded as far as recognizable.
pub fn decode_frame(bytes: &[u8]) -> Result<ParsedFrame, DecodeError> {
    let mut layers = Vec::with_capacity(8);
    decode_ethernet(bytes, 0, &mut layers, 0)?;
    let mh = layers.iter().rev().find_map(|l| match l {
        Layer::Measurement(m) => Some(*m),
        _ => None,
    });
    let mut parsed = ParsedFrame {
        stream_id: 0,
        seq: 0,
        tx_ts: 0,
        flags: 0,
        frame_size: bytes.len() as u32,
        layers,
        is_p4tg: mh.is_some(),
    };
    if let Some(m) = mh {
        parsed.stream_id = m.stream_id;
        parsed.seq = m.seq;
        parsed.tx_ts = m.tx_ts;
        parsed.flags = m.flags;
    }
    Ok(parsed)
}

fn need(b: &[u8], off: usize, len: usize, layer: LayerKind) -> Result<(), DecodeError> {
    if b.len() < off + len {
        Err(DecodeError::TruncatedFrame { layer, offset: off })
    } else {
        Ok(())
    }
}

fn decode_ethernet(
    b: &[u8],
    mut off: usize,
    layers: &mut Vec<Layer>,
    nesting: usize,
) -> Result<(), DecodeError> {
    need(b, off, ETH_LEN as usize, LayerKind::Ethernet)?;
    let mut ethertype = be16(b, off + 12);
    layers.push(Layer::Ethernet {
        dst: mac_at(b, off),
        src: mac_at(b, off + 6),
        ethertype,
    });
    off += ETH_LEN as usize;

    while ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
        need(b, off, VLAN_TAG_LEN as usize, LayerKind::Vlan)?;
        layers.push(Layer::Vlan {
            tpid: ethertype,
            tag: VlanTag::from_tci(be16(b, off)),
        });
        ethertype = be16(b, off + 2);
        off += VLAN_TAG_LEN as usize;
    }

    if ethertype == ETHERTYPE_MPLS {
        loop {
            need(b, off, MPLS_LSE_LEN as usize, LayerKind::Mpls)?;
            let word = be32(b, off);
            let bottom = word & 0x100 != 0;
            layers.push(Layer::Mpls {
                lse: MplsLse {
                    label: word >> 12,
                    tc: ((word >> 9) & 0x7) as u8,
                    ttl: word as u8,
                },
                bottom_of_stack: bottom,
            });
            off += MPLS_LSE_LEN as usize;
            if bottom {
                break;
            }
        }
        // no ethertype after the label stack; sniff the IP version nibble
        ethertype = match b.get(off).map(|v| v >> 4) {
            Some(4) => ETHERTYPE_IPV4,
            Some(6) => ETHERTYPE_IPV6,
            _ => return Ok(()),
        };
    }

    match ethertype {
        ETHERTYPE_IPV4 => decode_ipv4(b, off, layers, nesting),
        ETHERTYPE_IPV6 => decode_ipv6(b, off, layers),
        ETHERTYPE_ARP => {
            if let Some(arp) = ArpPacket::parse(&b[off..]) {
                layers.push(Layer::Arp(arp));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn decode_ipv4(
    b: &[u8],
    off: usize,
    layers: &mut Vec<Layer>,
    nesting: usize,
) -> Result<(), DecodeError> {
    need(b, off, IPV4_LEN as usize, LayerKind::Ipv4)?;
    let ihl = usize::from(b[off] & 0x0f) * 4;
    let total_len = be16(b, off + 2);
    if ihl < IPV4_LEN as usize || usize::from(total_len) < ihl {
        return Ok(());
    }
    need(b, off, usize::from(total_len), LayerKind::Ipv4)?;
    let protocol = b[off + 9];
    layers.push(Layer::Ipv4 {
        src: v4_at(b, off + 12),
        dst: v4_at(b, off + 16),
        tos: b[off + 1],
        ttl: b[off + 8],
        protocol,
        total_len,
    });
    let fragmented = be16(b, off + 6) & 0x3fff != 0;
    if protocol == IP_PROTO_UDP && !fragmented {
        decode_udp(&b[..off + usize::from(total_len)], off + ihl, layers, nesting)
    } else {
        Ok(())
    }
}

fn decode_ipv6(b: &[u8], off: usize, layers: &mut Vec<Layer>) -> Result<(), DecodeError> {
    need(b, off, IPV6_LEN as usize, LayerKind::Ipv6)?;
    let word = be32(b, off);
    let payload_len = be16(b, off + 4);
    let next_header = b[off + 6];
    layers.push(Layer::Ipv6 {
        src: v6_at(b, off + 8),
        dst: v6_at(b, off + 24),
        traffic_class: (word >> 20) as u8,
        flow_label: word & 0xf_ffff,
        next_header,
        payload_len,
    });
    let payload_start = off + IPV6_LEN as usize;
    let mut off = payload_start;

    let mut nh = next_header;
    if nh == IPV6_NH_ROUTING {
        need(b, off, SRH_FIXED_LEN as usize, LayerKind::Srh)?;
        let ext_len = (usize::from(b[off + 1]) + 1) * 8;
        let routing_type = b[off + 2];
        need(b, off, ext_len, LayerKind::Srh)?;
        if routing_type != ROUTING_TYPE_SRH {
            return Ok(());
        }
        nh = b[off];
        let segments = b[off + SRH_FIXED_LEN as usize..off + ext_len]
            .chunks_exact(SID_LEN as usize)
            .map(|c| v6_at(c, 0))
            .collect();
        layers.push(Layer::Srh {
            next_header: nh,
            segments_left: b[off + 3],
            last_entry: b[off + 4],
            segments,
        });
        off += ext_len;
    }
    need(b, payload_start, usize::from(payload_len), LayerKind::Ipv6)?;
    let b = &b[..payload_start + usize::from(payload_len)];
    if nh == IP_PROTO_UDP {
        decode_udp(b, off, layers, MAX_NESTING)
    } else {
        Ok(())
    }
}

fn decode_udp(
    b: &[u8],
    off: usize,
    layers: &mut Vec<Layer>,
    nesting: usize,
) -> Result<(), DecodeError> {
    need(b, off, UDP_LEN as usize, LayerKind::Udp)?;
    let length = be16(b, off + 4);
    let dst_port = be16(b, off + 2);
    if usize::from(length) < UDP_LEN as usize {
        return Ok(());
    }
    need(b, off, usize::from(length), LayerKind::Udp)?;
    layers.push(Layer::Udp {
        src_port: be16(b, off),
        dst_port,
        length,
        checksum: be16(b, off + 6),
    });
    let payload = &b[off + UDP_LEN as usize..off + usize::from(length)];
    if dst_port == VXLAN_UDP_PORT && nesting < MAX_NESTING {
        need(payload, 0, VXLAN_LEN as usize, LayerKind::Vxlan)?;
        if payload[0] & 0x08 != 0 {
            layers.push(Layer::Vxlan {
                vni: be32(payload, 4) >> 8,
            });
            let inner = off + (UDP_LEN + VXLAN_LEN) as usize;
            return decode_ethernet(&b[..off + usize::from(length)], inner, layers, nesting + 1);
        }
    }
    if let Some(mh) = MeasurementHeader::parse(payload) {
        layers.push(Layer::Measurement(mh));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
