use super::*;
use crate::model::fixtures::*;
use crate::model::{validate_config, DeviceProfile, Ipv4Spec, Ipv6Spec, Mode, QinQ};
use alloc::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn overhead_plain_ipv4() {
    assert_eq!(header_overhead(&ipv4_stream(1, 64, 1e6)), 14 + 20 + 8 + 18);
    assert_eq!(header_overhead(&ipv6_stream(1, 512)), 14 + 40 + 8 + 18);
}

#[test]
fn overhead_per_layer_increments() {
    let base = ipv4_stream(1, 1500, 1e6);
    let plain = header_overhead(&base);

    let mut s = base.clone();
    s.encap.vlan = Some(VlanTag::default());
    assert_eq!(header_overhead(&s), plain + 4);

    let mut s = base.clone();
    s.encap.qinq = Some(QinQ::default());
    assert_eq!(header_overhead(&s), plain + 8);

    for n in 0..=15 {
        let mut s = base.clone();
        s.encap.mpls = vec![MplsLse::default(); n];
        assert_eq!(header_overhead(&s), plain + 4 * n as u32);
    }

    let mut s = base.clone();
    s.encap.vxlan = Some(vxlan());
    assert_eq!(header_overhead(&s), plain + 50);
}

#[test]
fn overhead_srv6_is_48_plus_16_per_segment() {
    let base = ipv4_stream(1, 1500, 1e6);
    let without_l3 = header_overhead(&base) - IPV4_LEN;
    for n in 1..=3 {
        let mut s = base.clone();
        s.encap.srv6 = Some(srv6(n));
        assert_eq!(header_overhead(&s) - without_l3, 48 + 16 * n as u32);
    }
    let mut s = base;
    s.encap.srv6 = Some(srv6(3));
    assert_eq!(header_overhead(&s), 14 + (48 + 16 * 3) + 8 + 18);
}

#[test]
fn same_seed_same_bytes() {
    let mut s = ipv4_stream(9, 1024, 1e6);
    if let L3Spec::Ipv4(v4) = &mut s.l3 {
        v4.src_random_mask = Ipv4Addr::new(0, 0, 255, 255);
    }
    let a = encode_frame(&s, 17, 99, &mut rng(5));
    let b = encode_frame(&s, 17, 99, &mut rng(5));
    let c = encode_frame(&s, 17, 99, &mut rng(6));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 1020);
}

#[test]
fn ipv4_header_checksum_valid() {
    let frame = encode_frame(&ipv4_stream(1, 200, 1e6), 0, 0, &mut rng(0));
    assert!(ipv4_checksum_ok(&frame[14..34]));
}

#[test]
fn ipv6_udp_checksum_verifies() {
    let s = ipv6_stream(3, 300);
    let frame = encode_frame(&s, 7, 7, &mut rng(1));
    let parsed = decode_frame(&frame).unwrap();
    let Layer::Udp { checksum, .. } = parsed.layers[2] else {
        panic!("expected UDP, got {:?}", parsed.layers[2]);
    };
    assert_ne!(checksum, 0);
    // Summing the segment including its checksum over the pseudo-header gives all ones.
    let seg = &frame[54..];
    let mut sum = sum_words(&"2001:db8::1".parse::<Ipv6Addr>().unwrap().octets())
        + sum_words(&"2001:db8::2".parse::<Ipv6Addr>().unwrap().octets())
        + seg.len() as u32
        + u32::from(IP_PROTO_UDP);
    sum += sum_words(seg);
    assert_eq!(fold(sum), 0xffff);
}

#[test]
fn mpls_bottom_of_stack_only_on_last() {
    for depth in 1..=15usize {
        let mut s = ipv4_stream(1, 512, 1e6);
        s.encap.mpls = (0..depth)
            .map(|i| MplsLse {
                label: i as u32 + 16,
                tc: 0,
                ttl: 64,
            })
            .collect();
        let frame = encode_frame(&s, 0, 0, &mut rng(0));
        let bos: alloc::vec::Vec<bool> = (0..depth)
            .map(|i| frame[14 + 4 * i + 2] & 0x01 != 0)
            .collect();
        assert_eq!(bos.iter().filter(|b| **b).count(), 1, "depth {depth}");
        assert!(bos[depth - 1]);
    }
}

#[test]
fn srh_layout() {
    let mut s = ipv4_stream(1, 512, 1e6);
    s.encap.srv6 = Some(srv6(3));
    let frame = encode_frame(&s, 0, 0, &mut rng(0));
    let parsed = decode_frame(&frame).unwrap();
    let Layer::Srh {
        next_header,
        segments_left,
        last_entry,
        segments,
    } = &parsed.layers[2]
    else {
        panic!("no SRH: {:?}", parsed.layer_kinds());
    };
    assert_eq!(*next_header, IP_PROTO_UDP);
    assert_eq!(*segments_left, 2);
    assert_eq!(*last_entry, 2);
    let traversal = srv6(3).segments;
    let reversed: alloc::vec::Vec<_> = traversal.iter().rev().copied().collect();
    assert_eq!(segments, &reversed);
    assert_eq!(frame[54 + 2], ROUTING_TYPE_SRH);
    assert_eq!(frame[54 + 1], 6);
}

#[test]
fn srv6_decode_accepts_any_segments_left() {
    let mut s = ipv4_stream(1, 512, 1e6);
    s.encap.srv6 = Some(srv6(2));
    let mut frame = encode_frame(&s, 3, 4, &mut rng(0));
    frame[54 + 3] = 0;
    let parsed = decode_frame(&frame).unwrap();
    assert!(parsed.is_p4tg);
    assert_eq!(parsed.seq, 3);
}

#[test]
fn non_p4tg_udp_frame() {
    let mut frame = encode_frame(&ipv4_stream(1, 128, 1e6), 0, 0, &mut rng(0));
    frame[42] ^= 0xff; // corrupt magic
    let parsed = decode_frame(&frame).unwrap();
    assert!(!parsed.is_p4tg);
    assert_eq!(
        parsed.layer_kinds(),
        vec![LayerKind::Ethernet, LayerKind::Ipv4, LayerKind::Udp]
    );
    assert_eq!(parsed.frame_size, 124);
}

#[test]
fn unknown_ethertype_decodes_ethernet_only() {
    let mut frame = vec![0u8; 60];
    frame[12] = 0x88;
    frame[13] = 0xb5;
    let parsed = decode_frame(&frame).unwrap();
    assert_eq!(parsed.layer_kinds(), vec![LayerKind::Ethernet]);
    assert!(!parsed.is_p4tg);
}

#[test]
fn truncation_is_reported() {
    assert!(matches!(
        decode_frame(&[0u8; 10]),
        Err(DecodeError::TruncatedFrame {
            layer: LayerKind::Ethernet,
            ..
        })
    ));
    let frame = encode_frame(&ipv4_stream(1, 512, 1e6), 0, 0, &mut rng(0));
    assert!(matches!(
        decode_frame(&frame[..100]),
        Err(DecodeError::TruncatedFrame {
            layer: LayerKind::Ipv4,
            ..
        })
    ));
    let mut s = ipv4_stream(1, 512, 1e6);
    s.encap.mpls = vec![MplsLse::default(); 3];
    let frame = encode_frame(&s, 0, 0, &mut rng(0));
    assert!(matches!(
        decode_frame(&frame[..20]),
        Err(DecodeError::TruncatedFrame {
            layer: LayerKind::Mpls,
            ..
        })
    ));
}

#[test]
fn last_flag_round_trips() {
    let s = ipv4_stream(2, 64, 1e6);
    let frame = encode_frame_with_flags(&s, 41, 5, FLAG_LAST, &mut rng(0));
    let parsed = decode_frame(&frame).unwrap();
    assert!(parsed.is_last());
    assert_eq!(parsed.seq, 41);
    assert!(!decode_frame(&encode_frame(&s, 41, 5, &mut rng(0)))
        .unwrap()
        .is_last());
}

#[test]
fn sequence_and_timestamp_wrap_at_48_bits() {
    let s = ipv4_stream(2, 64, 1e6);
    let frame = encode_frame(&s, (1 << 48) + 5, (1 << 48) + 9, &mut rng(0));
    let parsed = decode_frame(&frame).unwrap();
    assert_eq!((parsed.seq, parsed.tx_ts), (5, 9));
    assert_eq!(ts_delta(3, (1 << 48) - 2), 5);
    assert_eq!(ts_delta(1_000, 400), 600);
}

#[test]
fn arp_reply_fields() {
    let requester = MacAddr::new(0xaa, 0, 0, 0, 0, 1);
    let reply_mac = MacAddr::new(0x02, 0, 0, 0, 0, 0xaa);
    let req = encode_arp_request(requester, Ipv4Addr::new(10, 0, 0, 2), Ipv4Addr::new(10, 0, 0, 1));
    let parsed = decode_frame(&req).unwrap();
    let arp = *parsed.arp().unwrap();
    assert_eq!(arp.operation, ARP_REQUEST);

    let reply = encode_arp_reply(&arp, reply_mac).unwrap();
    let parsed = decode_frame(&reply).unwrap();
    let Layer::Ethernet { dst, src, .. } = parsed.layers[0] else {
        unreachable!()
    };
    assert_eq!((dst, src), (requester, reply_mac));
    let r = parsed.arp().unwrap();
    assert_eq!(r.operation, ARP_REPLY);
    assert_eq!(r.sender_mac, reply_mac);
    assert_eq!(r.sender_ip, Ipv4Addr::new(10, 0, 0, 1));
    assert_eq!(r.target_mac, requester);
    assert_eq!(r.target_ip, Ipv4Addr::new(10, 0, 0, 2));

    assert_eq!(
        encode_arp_reply(r, reply_mac),
        Err(ArpError::NotAnArpRequest(ARP_REPLY))
    );
}

#[test]
fn gratuitous_arp_request_is_answered_normally() {
    let me = MacAddr::new(0xaa, 0, 0, 0, 0, 7);
    let ip = Ipv4Addr::new(10, 0, 0, 7);
    let req = encode_arp_request(me, ip, ip);
    let arp = *decode_frame(&req).unwrap().arp().unwrap();
    let reply = encode_arp_reply(&arp, MacAddr::new(2, 0, 0, 0, 0, 1)).unwrap();
    let r = *decode_frame(&reply).unwrap().arp().unwrap();
    assert_eq!((r.sender_ip, r.target_ip), (ip, ip));
    assert_eq!(reply.len(), 60);
}

fn arb_vlan() -> impl Strategy<Value = VlanTag> {
    (0u8..8, any::<bool>(), 0u16..4096).prop_map(|(pcp, dei, vid)| VlanTag { pcp, dei, vid })
}

fn arb_stream() -> impl Strategy<Value = StreamDescription> {
    let l3 = prop_oneof![
        (any::<u32>(), any::<u32>(), any::<u32>(), any::<u8>()).prop_map(|(s, d, m, tos)| {
            L3Spec::Ipv4(Ipv4Spec {
                src: Ipv4Addr::from(s),
                dst: Ipv4Addr::from(d),
                src_random_mask: Ipv4Addr::from(m),
                dst_random_mask: Ipv4Addr::from(m.rotate_left(7)),
                tos,
            })
        }),
        (any::<u128>(), any::<u128>(), 0u32..=48, any::<u8>(), 0u32..(1 << 20)).prop_map(
            |(s, d, bits, tc, fl)| {
                let mask = if bits == 0 { 0 } else { u128::MAX >> (128 - bits) };
                L3Spec::Ipv6(Ipv6Spec {
                    src: Ipv6Addr::from(s),
                    dst: Ipv6Addr::from(d),
                    src_random_mask: Ipv6Addr::from(mask),
                    dst_random_mask: Ipv6Addr::from(mask << 64),
                    traffic_class: tc,
                    flow_label: fl,
                })
            }
        ),
    ];
    let tags = prop_oneof![
        Just((None, None)),
        arb_vlan().prop_map(|v| (Some(v), None)),
        (arb_vlan(), arb_vlan()).prop_map(|(o, i)| (None, Some(QinQ { outer: o, inner: i }))),
    ];
    let mpls = prop::collection::vec(
        (0u32..(1 << 20), 0u8..8, any::<u8>()).prop_map(|(label, tc, ttl)| MplsLse {
            label,
            tc,
            ttl,
        }),
        0..=15,
    );
    let tunnel = prop_oneof![Just(0u8), Just(1), Just(2)];
    (1u8..=255, l3, tags, mpls, tunnel, 1usize..=3, 0u32..600, any::<bool>())
        .prop_map(|(id, l3, (vlan, qinq), mpls, tunnel, segs, extra, poisson)| {
            let mut s = ipv4_stream(id, 64, 1e6);
            s.mode = if poisson { Mode::Poisson } else { Mode::Cbr };
            s.l3 = l3;
            s.encap.vlan = vlan;
            s.encap.qinq = qinq;
            s.encap.mpls = mpls;
            match tunnel {
                1 => s.encap.srv6 = Some(srv6(segs)),
                2 => s.encap.vxlan = Some(vxlan()),
                _ => {}
            }
            s.frame_size = (header_overhead(&s) + FCS_LEN + extra).max(64);
            s
        })
}

fn expected_kinds(s: &StreamDescription) -> alloc::vec::Vec<LayerKind> {
    let mut k = alloc::vec::Vec::new();
    if s.encap.vxlan.is_some() {
        k.extend([LayerKind::Ethernet, LayerKind::Ipv4, LayerKind::Udp, LayerKind::Vxlan]);
    }
    k.push(LayerKind::Ethernet);
    if s.encap.qinq.is_some() {
        k.extend([LayerKind::Vlan, LayerKind::Vlan]);
    } else if s.encap.vlan.is_some() {
        k.push(LayerKind::Vlan);
    }
    k.extend(core::iter::repeat_n(LayerKind::Mpls, s.encap.mpls.len()));
    if s.encap.srv6.is_some() {
        k.extend([LayerKind::Ipv6, LayerKind::Srh]);
    } else {
        k.push(match s.l3 {
            L3Spec::Ipv4(_) => LayerKind::Ipv4,
            L3Spec::Ipv6(_) => LayerKind::Ipv6,
        });
    }
    k.extend([LayerKind::Udp, LayerKind::Measurement]);
    k
}

proptest! {
    #[test]
    fn round_trip_recovers_measurement_and_layers(
        s in arb_stream(), seq in 0u64..(1 << 48), ts in 0u64..(1 << 48), seed in any::<u64>()
    ) {
        validate_config(&config(vec![s.clone()]), DeviceProfile::Gen2).unwrap();
        let frame = encode_frame(&s, seq, ts, &mut rng(seed));
        prop_assert_eq!(frame.len() as u32, s.frame_size - FCS_LEN);
        let parsed = decode_frame(&frame).unwrap();
        prop_assert!(parsed.is_p4tg);
        prop_assert_eq!((parsed.stream_id, parsed.seq, parsed.tx_ts), (s.stream_id, seq, ts));
        prop_assert_eq!(parsed.layer_kinds(), expected_kinds(&s));
    }

    #[test]
    fn randomized_bits_stay_inside_mask(smask in any::<u32>(), dmask in any::<u32>(), seed in any::<u64>()) {
        let mut s = ipv4_stream(1, 128, 1e6);
        let L3Spec::Ipv4(v4) = &mut s.l3 else { unreachable!() };
        v4.src_random_mask = Ipv4Addr::from(smask);
        v4.dst_random_mask = Ipv4Addr::from(dmask);
        let (tsrc, tdst) = (u32::from(v4.src), u32::from(v4.dst));
        let mut r = rng(seed);
        for _ in 0..200 {
            let frame = encode_frame(&s, 0, 0, &mut r);
            let Layer::Ipv4 { src, dst, .. } = decode_frame(&frame).unwrap().layers[1] else {
                unreachable!()
            };
            prop_assert_eq!((u32::from(src) ^ tsrc) & !smask, 0);
            prop_assert_eq!((u32::from(dst) ^ tdst) & !dmask, 0);
        }
    }
}

#[test]
fn ipv6_randomized_bits_stay_inside_mask_over_10k_frames() {
    let mut s = ipv6_stream(1, 128);
    let src_mask = u128::MAX >> 80;
    let dst_mask = (0xffff_ffu128 << 100) | 0xff_ffff;
    let L3Spec::Ipv6(v6) = &mut s.l3 else {
        unreachable!()
    };
    v6.src_random_mask = Ipv6Addr::from(src_mask);
    v6.dst_random_mask = Ipv6Addr::from(dst_mask);
    let (tsrc, tdst) = (u128::from(v6.src), u128::from(v6.dst));
    let mut r = rng(77);
    let mut seen_src = 0u128;
    for _ in 0..10_000 {
        let frame = encode_frame(&s, 0, 0, &mut r);
        let Layer::Ipv6 { src, dst, .. } = decode_frame(&frame).unwrap().layers[1] else {
            unreachable!()
        };
        assert_eq!((u128::from(src) ^ tsrc) & !src_mask, 0);
        assert_eq!((u128::from(dst) ^ tdst) & !dst_mask, 0);
        seen_src |= u128::from(src) ^ tsrc;
    }
    // every maskable bit was exercised at least once
    assert_eq!(seen_src, src_mask);
}
