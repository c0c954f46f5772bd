//! Wire codec: layout, checksum, round-trip and stream robustness.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use watercare_core::protocol::{
    crc16, decode_stream, encode, payload_len, DecodeError, Message, Packet, StreamDecoder,
    MAX_FRAME_LEN, OVERHEAD,
};

/// Bit-at-a-time CRC-16, poly 0x1021, init 0xFFFF, no reflection.
fn crc_reference(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
    }
    crc
}

#[test]
fn crc_check_value_and_reference() {
    assert_eq!(crc_reference(b"123456789"), 0x29B1);
    assert_eq!(crc16(b"123456789"), 0x29B1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let n = rng.gen_range(0..300);
        let buf: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        assert_eq!(crc16(&buf), crc_reference(&buf));
    }
}

#[test]
fn heartbeat_layout() {
    let frame = encode(&Message::Heartbeat { mode: 2, armed: 1 }, 0, 1, 1);
    assert_eq!(frame, [0xC7, 0x02, 0x00, 0x01, 0x01, 0x00, 0x02, 0x01, 0x8B, 0x3B]);
    let count = encode(&Message::MissionCount { count: 0 }, 0, 255, 0);
    assert_eq!(&count[6..8], &[0, 0]);
}

#[test]
fn empty_buffer() {
    let (d, rest) = decode_stream(&[]);
    assert!(d.packets.is_empty() && d.errors.is_empty() && rest.is_empty());
}

fn arb_f32() -> impl Strategy<Value = f32> {
    // full bit patterns except NaN, whose payload equality is not structural
    any::<u32>().prop_map(f32::from_bits).prop_filter("nan", |v| !v.is_nan())
}

fn arb_message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u8>(), any::<u8>()).prop_map(|(mode, armed)| Message::Heartbeat { mode, armed }),
        (any::<u32>(), arb_f32(), arb_f32(), arb_f32(), arb_f32()).prop_map(|(t_ms, x, y, heading, speed)| {
            Message::Position { t_ms, x, y, heading, speed }
        }),
        (arb_f32(), arb_f32(), arb_f32()).prop_map(|(soc_wh, solar_w, load_w)| Message::Power { soc_wh, solar_w, load_w }),
        (arb_f32(), any::<u16>()).prop_map(|(payload_kg, items)| Message::TrashStatus { payload_kg, items }),
        any::<u16>().prop_map(|count| Message::MissionCount { count }),
        (any::<u16>(), arb_f32(), arb_f32(), arb_f32()).prop_map(|(index, x, y, accept_radius)| {
            Message::MissionItem { index, x, y, accept_radius }
        }),
        any::<u8>().prop_map(|result| Message::MissionAck { result }),
        any::<u8>().prop_map(|cmd| Message::Command { cmd }),
        (any::<u8>(), any::<u8>()).prop_map(|(cmd, result)| Message::CommandAck { cmd, result }),
        (any::<u32>(), any::<u8>(), any::<u16>()).prop_map(|(t_ms, camera_id, count)| {
            Message::FenceAlert { t_ms, camera_id, count }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip(msg in arb_message(), seq: u8, sys: u8, comp: u8) {
        let frame = encode(&msg, seq, sys, comp);
        prop_assert_eq!(frame.len(), OVERHEAD + payload_len(msg.id()).unwrap());
        let (d, rest) = decode_stream(&frame);
        prop_assert!(rest.is_empty());
        prop_assert!(d.errors.is_empty());
        prop_assert_eq!(d.packets.len(), 1);
        let p = d.packets[0];
        prop_assert_eq!(p.message, msg);
        prop_assert_eq!((p.header.seq, p.header.sys_id, p.header.comp_id), (seq, sys, comp));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn chunk_splits_match_one_shot(
        msgs in prop::collection::vec(arb_message(), 1..12),
        noise in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..6), 12),
        cuts in prop::collection::vec(1usize..40, 1..30),
    ) {
        let mut stream = Vec::new();
        for (i, m) in msgs.iter().enumerate() {
            stream.extend_from_slice(&noise[i]);
            stream.extend(encode(m, i as u8, 1, 1));
        }
        let (whole, whole_rest) = decode_stream(&stream);

        let mut dec = StreamDecoder::new();
        let mut packets: Vec<Packet> = Vec::new();
        let mut pos = 0;
        for c in cuts.iter().cycle() {
            if pos >= stream.len() {
                break;
            }
            let end = (pos + c).min(stream.len());
            packets.extend(dec.feed(&stream[pos..end]).packets);
            pos = end;
        }
        prop_assert_eq!(&packets, &whole.packets);
        prop_assert_eq!(dec.remainder(), &whole_rest[..]);
        // every frame survives unless injected noise happens to forge a frame start
        let seqs: Vec<u8> = packets.iter().map(|p| p.header.seq).collect();
        prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn every_single_bit_flip_is_caught() {
    let known = [
        Message::Position { t_ms: 123_456, x: 1.5, y: -7.25, heading: 0.5, speed: 0.8 },
        Message::Heartbeat { mode: 2, armed: 1 },
        Message::FenceAlert { t_ms: 4000, camera_id: 3, count: 1 },
    ];
    for msg in known {
        let frame = encode(&msg, 9, 1, 1);
        for bit in 0..frame.len() * 8 {
            let mut bad = frame.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            let (d, _) = decode_stream(&bad);
            assert!(d.packets.is_empty(), "{msg:?} flip {bit} decoded {:?}", d.packets);
            // past the magic byte the reference CRC no longer matches
            if bit >= 8 {
                let len = bad[1] as usize;
                if bad.len() >= OVERHEAD + len {
                    let stored = u16::from_le_bytes([bad[6 + len], bad[7 + len]]);
                    assert_ne!(crc_reference(&bad[1..6 + len]), stored);
                }
            }
        }
    }
}

#[test]
fn garbage_between_frames_resyncs_once() {
    let a = encode(&Message::Command { cmd: 3 }, 1, 255, 0);
    let b = encode(&Message::MissionAck { result: 0 }, 2, 1, 1);
    let mut buf = a.clone();
    buf.extend_from_slice(&[0x00, 0x13, 0x37]);
    buf.extend_from_slice(&b);
    let (d, rest) = decode_stream(&buf);
    assert_eq!(d.packets.len(), 2);
    assert!(rest.is_empty());
    assert_eq!(d.errors, vec![DecodeError::Garbage { at: a.len(), skipped: 3 }]);
}

#[test]
fn unknown_id_and_bad_length_skip_frame() {
    let mut unknown = vec![0xC7, 1, 0, 1, 1, 42, 7];
    let crc = crc_reference(&unknown[1..]);
    unknown.extend(crc.to_le_bytes());
    let mut short = vec![0xC7, 1, 0, 1, 1, 1, 7];
    let crc = crc_reference(&short[1..]);
    short.extend(crc.to_le_bytes());
    let good = encode(&Message::Command { cmd: 1 }, 5, 255, 0);
    let buf = [unknown, short, good].concat();
    let (d, rest) = decode_stream(&buf);
    assert_eq!(d.packets.len(), 1);
    assert!(rest.is_empty());
    assert!(matches!(d.errors[0], DecodeError::UnknownMsgId { id: 42, .. }));
    assert!(matches!(d.errors[1], DecodeError::BadLength { id: 1, len: 1, .. }));
}

#[test]
fn fuzz_buffers_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    let seed_frame = encode(&Message::Power { soc_wh: 40.0, solar_w: 2.0, load_w: 1.0 }, 0, 1, 1);
    for i in 0..100_000 {
        let n = rng.gen_range(0..=1024);
        let mut buf: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        // bias some buffers toward frame-like content
        if i % 4 == 0 && n > seed_frame.len() {
            let at = rng.gen_range(0..n - seed_frame.len());
            buf[at..at + seed_frame.len()].copy_from_slice(&seed_frame);
            let flip = rng.gen_range(0..buf.len());
            buf[flip] = buf[flip].wrapping_add(rng.gen_range(0..2));
        }
        if i % 3 == 0 {
            for b in buf.iter_mut().step_by(rng.gen_range(1..20)) {
                *b = 0xC7;
            }
        }
        let (d, rest) = decode_stream(&buf);
        assert!(rest.len() < MAX_FRAME_LEN);
        assert!(d.packets.len() <= buf.len() / OVERHEAD);
        for p in &d.packets {
            assert_eq!(Some(encode(&p.message, 0, 0, 0).len() - OVERHEAD), payload_len(p.message.id()));
        }
    }
}
