//! Golden frames built independently with scapy (`golden/gen_vectors.py`).
//! Frame sizes equal header overhead + FCS so no random padding is involved.

use std::net::{Ipv4Addr, Ipv6Addr};

use swtg_core::codec::{header_overhead, FCS_LEN};
use swtg_core::model::{
    EncapsulationStack, EthernetSpec, Ipv4Spec, Ipv6Spec, L3Spec, MacAddr, MplsLse, Mode, PortId,
    QinQ, Srv6Spec, StreamDescription, UdpPorts, VlanTag, VxlanSpec,
};

pub const ARP_REQUEST: &str = include_str!("../golden/arp_request.hex");
pub const ARP_REPLY: &str = include_str!("../golden/arp_reply.hex");

pub fn hex(s: &str) -> Vec<u8> {
    let s = s.trim();
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

pub fn base(stream_id: u8) -> StreamDescription {
    StreamDescription {
        stream_id,
        mode: Mode::Cbr,
        target_rate_l1: 1e6,
        frame_size: 0,
        eth: EthernetSpec {
            src_mac: MacAddr::new(2, 0, 0, 0, 0, 1),
            dst_mac: MacAddr::new(2, 0, 0, 0, 0, 2),
        },
        l3: L3Spec::Ipv4(Ipv4Spec {
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            src_random_mask: Ipv4Addr::UNSPECIFIED,
            dst_random_mask: Ipv4Addr::UNSPECIFIED,
            tos: 0,
        }),
        encap: EncapsulationStack::default(),
        udp: UdpPorts::default(),
        tx_ports: vec![PortId(0)],
    }
}

pub fn vxlan() -> VxlanSpec {
    VxlanSpec {
        eth: EthernetSpec {
            src_mac: MacAddr::new(2, 0, 0, 0, 1, 1),
            dst_mac: MacAddr::new(2, 0, 0, 0, 1, 2),
        },
        src: Ipv4Addr::new(192, 168, 0, 1),
        dst: Ipv4Addr::new(192, 168, 0, 2),
        udp_src_port: 49152,
        vni: 100,
    }
}

pub struct Vector {
    pub name: &'static str,
    pub golden: &'static str,
    pub desc: StreamDescription,
    pub seq: u64,
    pub ts: u64,
}

pub fn vectors() -> Vec<Vector> {
    let mut out = Vec::new();
    let mut push = |name, golden, mut desc: StreamDescription, seq, ts| {
        desc.frame_size = header_overhead(&desc) + FCS_LEN;
        out.push(Vector {
            name,
            golden,
            desc,
            seq,
            ts,
        });
    };

    push("plain", include_str!("../golden/plain.hex"), base(1), 0, 0);

    let mut d = base(2);
    d.encap.vlan = Some(VlanTag {
        pcp: 3,
        dei: false,
        vid: 100,
    });
    push("vlan", include_str!("../golden/vlan.hex"), d, 1, 1000);

    let mut d = base(3);
    d.encap.qinq = Some(QinQ {
        outer: VlanTag {
            pcp: 1,
            dei: false,
            vid: 200,
        },
        inner: VlanTag {
            pcp: 2,
            dei: false,
            vid: 300,
        },
    });
    push("qinq", include_str!("../golden/qinq.hex"), d, 2, 2000);

    let mut d = base(4);
    d.encap.mpls = (0..15u32)
        .map(|i| MplsLse {
            label: 1000 + i,
            tc: (i % 8) as u8,
            ttl: 64 - i as u8,
        })
        .collect();
    push("mpls15", include_str!("../golden/mpls15.hex"), d, 3, 3000);

    let mut d = base(5);
    d.encap.srv6 = Some(Srv6Spec {
        src: "2001:db8::10".parse().unwrap(),
        dst: "2001:db8:1::1".parse().unwrap(),
        segments: vec![
            "2001:db8:1::1".parse().unwrap(),
            "2001:db8:2::1".parse().unwrap(),
            "2001:db8:3::1".parse().unwrap(),
        ],
    });
    push("srv6x3", include_str!("../golden/srv6x3.hex"), d, 4, 4000);

    let mut d = base(6);
    d.encap.vxlan = Some(vxlan());
    push("vxlan", include_str!("../golden/vxlan.hex"), d, 5, 5000);

    let mut d = base(7);
    d.encap.vxlan = Some(vxlan());
    d.encap.vlan = Some(VlanTag {
        pcp: 0,
        dei: false,
        vid: 42,
    });
    push("vxlan_vlan", include_str!("../golden/vxlan_vlan.hex"), d, 6, 6000);

    let mut d = base(8);
    d.l3 = L3Spec::Ipv6(Ipv6Spec {
        src: "2001:db8::1".parse().unwrap(),
        dst: "2001:db8::2".parse().unwrap(),
        src_random_mask: Ipv6Addr::UNSPECIFIED,
        dst_random_mask: Ipv6Addr::UNSPECIFIED,
        traffic_class: 0x20,
        flow_label: 0x12345,
    });
    push("ipv6", include_str!("../golden/ipv6.hex"), d, 0xab_cdef, 0x12_3456_789a);
    out
}
