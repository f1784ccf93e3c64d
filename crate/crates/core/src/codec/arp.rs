use alloc::vec::Vec;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{be16, mac_at, put_eth, put_u16, v4_at, ETHERTYPE_ARP, ETHERTYPE_IPV4, FCS_LEN};
use crate::model::{MacAddr, MIN_FRAME_SIZE};

pub const ARP_REQUEST: u16 = 1;
pub const ARP_REPLY: u16 = 2;

const ARP_LEN: usize = 28;
const HTYPE_ETHERNET: u16 = 1;

/// Ethernet/IPv4 ARP payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArpPacket {
    pub operation: u16,
    pub sender_mac: MacAddr,
    pub sender_ip: Ipv4Addr,
    pub target_mac: MacAddr,
    pub target_ip: Ipv4Addr,
}

impl ArpPacket {
    pub(super) fn parse(b: &[u8]) -> Option<Self> {
        if b.len() < ARP_LEN
            || be16(b, 0) != HTYPE_ETHERNET
            || be16(b, 2) != ETHERTYPE_IPV4
            || b[4] != 6
            || b[5] != 4
        {
            return None;
        }
        Some(ArpPacket {
            operation: be16(b, 6),
            sender_mac: mac_at(b, 8),
            sender_ip: v4_at(b, 14),
            target_mac: mac_at(b, 18),
            target_ip: v4_at(b, 24),
        })
    }

    fn write(&self, eth_dst: MacAddr, out: &mut Vec<u8>) {
        put_eth(out, eth_dst, self.sender_mac);
        put_u16(out, ETHERTYPE_ARP);
        put_u16(out, HTYPE_ETHERNET);
        put_u16(out, ETHERTYPE_IPV4);
        out.extend_from_slice(&[6, 4]);
        put_u16(out, self.operation);
        out.extend_from_slice(&self.sender_mac.0);
        out.extend_from_slice(&self.sender_ip.octets());
        out.extend_from_slice(&self.target_mac.0);
        out.extend_from_slice(&self.target_ip.octets());
        // pad to the 64 byte minimum frame (FCS excluded)
        out.resize((MIN_FRAME_SIZE - FCS_LEN) as usize, 0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ArpError {
    #[error("ARP operation {0} is not a request")]
    NotAnArpRequest(u16),
}

/// Broadcast who-has request for `target_ip`.
pub fn encode_arp_request(
    requester_mac: MacAddr,
    requester_ip: Ipv4Addr,
    target_ip: Ipv4Addr,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(60);
    ArpPacket {
        operation: ARP_REQUEST,
        sender_mac: requester_mac,
        sender_ip: requester_ip,
        target_mac: MacAddr::ZERO,
        target_ip,
    }
    .write(MacAddr::BROADCAST, &mut out);
    out
}

/// Answers `request` claiming its target IP for `reply_mac`, unicast back to
/// the requester.
pub fn encode_arp_reply(request: &ArpPacket, reply_mac: MacAddr) -> Result<Vec<u8>, ArpError> {
    if request.operation != ARP_REQUEST {
        return Err(ArpError::NotAnArpRequest(request.operation));
    }
    let mut out = Vec::with_capacity(60);
    ArpPacket {
        operation: ARP_REPLY,
        sender_mac: reply_mac,
        sender_ip: request.target_ip,
        target_mac: request.sender_mac,
        target_ip: request.sender_ip,
    }
    .write(request.sender_mac, &mut out);
    Ok(out)
}
