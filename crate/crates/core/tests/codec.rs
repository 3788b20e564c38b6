use std::collections::HashMap;

use lorafree::protocol::{AckBitmap, DcSettings, FSettings, GroupAck, JoinAccept, JoinRequest};
use lorafree::CodecError;
use lorafree::Error;
use proptest::prelude::*;

fn fixtures() -> HashMap<&'static str, Vec<u8>> {
    include_str!("fixtures/codec/messages.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let mut f = l.split('\t');
            let name = f.next().unwrap();
            let hex = f.next().unwrap();
            let bytes = (0..hex.len()).step_by(2).map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap()).collect();
            (name, bytes)
        })
        .collect()
}

fn dc() -> DcSettings {
    DcSettings { data_rate: 2, tx_power: 0, ch_mask: 0b10, slot: 37, second_stage_s: 600 }
}

#[test]
fn fixed_messages_match_fixtures() {
    let fx = fixtures();
    assert_eq!(dc().encode().unwrap(), fx["dc_settings"]);
    let accept = JoinAccept { app_nonce: 0x010203, net_id: 0x13, dev_addr: 0x2601_1bda, settings: 0, dc_settings: dc() };
    assert_eq!(accept.encode().unwrap(), fx["join_accept"]);
    assert_eq!(JoinAccept::decode(&fx["join_accept"]).unwrap(), accept);
    let request = JoinRequest {
        app_eui: [1, 2, 3, 4, 5, 6, 7, 8],
        dev_eui: [0x11, 0x12, 0x13, 0x14, 0x15, 0x16, 0x17, 0x18],
        dev_nonce: 0xbeef,
        data_size: 5760,
        delay_elasticity_s: 3600,
    };
    assert_eq!(request.encode().unwrap(), fx["join_request"]);
    let fs = FSettings {
        packet_sizes: [255, 0, 0, 200, 0, 0],
        guards_ms: [3, 0, 0, 12, 0, 0],
        frame_lens: [300, 0, 0, 70, 0, 0],
        data_collection_ms: 60_000,
        next_round_s: 86_400,
    };
    assert_eq!(fs.encode().unwrap(), fx["fsettings"]);
    assert_eq!(FSettings::decode(&fx["fsettings"]).unwrap(), fs);
    let bitmap = AckBitmap::build([0, 3, 9], 10).unwrap();
    assert_eq!(bitmap.as_bytes(), &fx["ack_bitmap"][..]);
    let group = GroupAck { frame: 4, bitmaps: vec![bitmap, AckBitmap::build([1], 10).unwrap()] };
    assert_eq!(group.encode(), fx["group_ack"]);
    assert_eq!(GroupAck::decode(4, &fx["group_ack"], 10, 2).unwrap(), group);
}

#[test]
fn malformed_input_is_rejected() {
    assert!(matches!(JoinRequest::decode(&[0; 23]), Err(Error::Codec(CodecError::Length { .. }))));
    assert!(DcSettings::decode(&[0x20, 0, 0, 0, 0, 0, 0]).is_err(), "empty channel mask");
    assert!(AckBitmap::decode(&[0x90, 0x41], 10).is_err(), "padding bit set");
    assert!(AckBitmap::build([10], 10).is_err());
    let too_big = JoinRequest { data_size: 1 << 24, ..JoinRequest::default() };
    assert!(too_big.encode().is_err());
}

prop_compose! {
    fn any_dc()(data_rate in 0u8..6, tx_power in 0u8..16, ch_mask in 1u16.., slot: u16, second_stage_s: u16) -> DcSettings {
        DcSettings { data_rate, tx_power, ch_mask, slot, second_stage_s }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn join_request_round_trip(app_eui: [u8; 8], dev_eui: [u8; 8], dev_nonce: u16, data_size in 0u32..1 << 24, elasticity in 0u32..1 << 24) {
        let m = JoinRequest { app_eui, dev_eui, dev_nonce, data_size, delay_elasticity_s: elasticity };
        let bytes = m.encode().unwrap();
        prop_assert_eq!(bytes.len(), JoinRequest::LEN);
        prop_assert_eq!(JoinRequest::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn join_accept_round_trip(app_nonce in 0u32..1 << 24, net_id in 0u32..1 << 24, dev_addr: u32, settings: u8, dc in any_dc()) {
        let m = JoinAccept { app_nonce, net_id, dev_addr, settings, dc_settings: dc };
        let bytes = m.encode().unwrap();
        prop_assert_eq!(bytes.len(), JoinAccept::LEN);
        prop_assert_eq!(JoinAccept::decode(&bytes).unwrap(), m);
        prop_assert_eq!(dc.sf().unwrap().get(), 12 - dc.data_rate);
    }

    #[test]
    fn fsettings_round_trip(packet_sizes: [u8; 6], guards_ms: [u16; 6], frame_lens: [u16; 6], data_collection_ms: u32, next_round_s in 0u32..1 << 24) {
        let m = FSettings { packet_sizes, guards_ms, frame_lens, data_collection_ms, next_round_s };
        let bytes = m.encode().unwrap();
        prop_assert_eq!(bytes.len(), FSettings::LEN);
        prop_assert_eq!(FSettings::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn bitmap_round_trip(slots in 1usize..2000, picks in proptest::collection::vec(any::<prop::sample::Index>(), 0..64)) {
        let set: Vec<usize> = picks.iter().map(|i| i.index(slots)).collect();
        let b = AckBitmap::build(set.iter().copied(), slots).unwrap();
        prop_assert_eq!(b.as_bytes().len(), slots.div_ceil(8));
        let back = AckBitmap::decode(b.as_bytes(), slots).unwrap();
        for s in 0..slots {
            prop_assert_eq!(back.acked(s).unwrap(), set.contains(&s));
        }
        prop_assert_eq!(back, b);
    }

    #[test]
    fn group_ack_round_trip(slots in 1usize..600, channels in 1usize..3, frame: u32, seed: u64) {
        let bitmaps: Vec<AckBitmap> = (0..channels)
            .map(|c| AckBitmap::build((0..slots).filter(|s| (seed >> ((s + c) % 64)) & 1 == 1), slots).unwrap())
            .collect();
        let g = GroupAck { frame, bitmaps };
        prop_assert_eq!(GroupAck::decode(frame, &g.encode(), slots, channels).unwrap(), g);
    }
}
