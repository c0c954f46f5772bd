//! Binary telemetry/command framing between the bot, the shore cameras and
//! the ground-control service.
//!
//! ```text
//! +------+-----+-----+--------+---------+--------+-------------+---------+
//! | 0xC7 | len | seq | sys_id | comp_id | msg_id | payload[len]| crc LE  |
//! +------+-----+-----+--------+---------+--------+-------------+---------+
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE over `len ..= payload`, i.e. everything
//! except the magic byte and the CRC itself. All multi-byte fields are
//! little-endian. See PROTOCOL.md for the message table.

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: u8 = 0xC7;
pub const HEADER_LEN: usize = 6;
pub const CRC_LEN: usize = 2;
pub const OVERHEAD: usize = HEADER_LEN + CRC_LEN;
pub const MAX_FRAME_LEN: usize = OVERHEAD + u8::MAX as usize;

pub const SYS_BOT: u8 = 1;
pub const SYS_FENCE_CAMERA: u8 = 200;
pub const SYS_GCS: u8 = 255;

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no xorout).
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "msg", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Heartbeat {
        mode: u8,
        armed: u8,
    },
    Position {
        t_ms: u32,
        x: f32,
        y: f32,
        heading: f32,
        speed: f32,
    },
    Power {
        soc_wh: f32,
        solar_w: f32,
        load_w: f32,
    },
    TrashStatus {
        payload_kg: f32,
        items: u16,
    },
    MissionCount {
        count: u16,
    },
    MissionItem {
        index: u16,
        x: f32,
        y: f32,
        accept_radius: f32,
    },
    MissionAck {
        result: u8,
    },
    Command {
        cmd: u8,
    },
    CommandAck {
        cmd: u8,
        result: u8,
    },
    FenceAlert {
        t_ms: u32,
        camera_id: u8,
        count: u16,
    },
}

pub mod msg_id {
    pub const HEARTBEAT: u8 = 0;
    pub const POSITION: u8 = 1;
    pub const POWER: u8 = 2;
    pub const TRASH_STATUS: u8 = 3;
    pub const MISSION_COUNT: u8 = 4;
    pub const MISSION_ITEM: u8 = 5;
    pub const MISSION_ACK: u8 = 6;
    pub const COMMAND: u8 = 7;
    pub const COMMAND_ACK: u8 = 8;
    pub const FENCE_ALERT: u8 = 9;
}

/// MISSION_ACK result codes.
pub mod mission_result {
    pub const OK: u8 = 0;
    pub const MISSING_ITEMS: u8 = 1;
    pub const REJECTED: u8 = 2;
}

/// COMMAND_ACK result codes.
pub mod command_result {
    pub const ACCEPTED: u8 = 0;
    pub const REJECTED: u8 = 1;
    pub const UNSUPPORTED: u8 = 2;
}

/// Payload length for a message id, `None` for unknown ids.
pub fn payload_len(id: u8) -> Option<usize> {
    const LENS: [usize; 10] = [2, 20, 12, 6, 2, 14, 1, 1, 2, 7];
    LENS.get(id as usize).copied()
}

impl Message {
    pub fn id(&self) -> u8 {
        use msg_id::*;
        match self {
            Message::Heartbeat { .. } => HEARTBEAT,
            Message::Position { .. } => POSITION,
            Message::Power { .. } => POWER,
            Message::TrashStatus { .. } => TRASH_STATUS,
            Message::MissionCount { .. } => MISSION_COUNT,
            Message::MissionItem { .. } => MISSION_ITEM,
            Message::MissionAck { .. } => MISSION_ACK,
            Message::Command { .. } => COMMAND,
            Message::CommandAck { .. } => COMMAND_ACK,
            Message::FenceAlert { .. } => FENCE_ALERT,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Heartbeat { .. } => "HEARTBEAT",
            Message::Position { .. } => "POSITION",
            Message::Power { .. } => "POWER",
            Message::TrashStatus { .. } => "TRASH_STATUS",
            Message::MissionCount { .. } => "MISSION_COUNT",
            Message::MissionItem { .. } => "MISSION_ITEM",
            Message::MissionAck { .. } => "MISSION_ACK",
            Message::Command { .. } => "COMMAND",
            Message::CommandAck { .. } => "COMMAND_ACK",
            Message::FenceAlert { .. } => "FENCE_ALERT",
        }
    }

    /// False when any float field is NaN or infinite.
    pub fn is_finite(&self) -> bool {
        match *self {
            Message::Position {
                x,
                y,
                heading,
                speed,
                ..
            } => [x, y, heading, speed].iter().all(|v| v.is_finite()),
            Message::Power {
                soc_wh,
                solar_w,
                load_w,
            } => [soc_wh, solar_w, load_w].iter().all(|v| v.is_finite()),
            Message::TrashStatus { payload_kg, .. } => payload_kg.is_finite(),
            Message::MissionItem {
                x,
                y,
                accept_radius,
                ..
            } => [x, y, accept_radius].iter().all(|v| v.is_finite()),
            _ => true,
        }
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        match *self {
            Message::Heartbeat { mode, armed } => out.extend_from_slice(&[mode, armed]),
            Message::Position {
                t_ms,
                x,
                y,
                heading,
                speed,
            } => {
                out.extend_from_slice(&t_ms.to_le_bytes());
                for v in [x, y, heading, speed] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Message::Power {
                soc_wh,
                solar_w,
                load_w,
            } => {
                for v in [soc_wh, solar_w, load_w] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Message::TrashStatus { payload_kg, items } => {
                out.extend_from_slice(&payload_kg.to_le_bytes());
                out.extend_from_slice(&items.to_le_bytes());
            }
            Message::MissionCount { count } => out.extend_from_slice(&count.to_le_bytes()),
            Message::MissionItem {
                index,
                x,
                y,
                accept_radius,
            } => {
                out.extend_from_slice(&index.to_le_bytes());
                for v in [x, y, accept_radius] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Message::MissionAck { result } => out.push(result),
            Message::Command { cmd } => out.push(cmd),
            Message::CommandAck { cmd, result } => out.extend_from_slice(&[cmd, result]),
            Message::FenceAlert {
                t_ms,
                camera_id,
                count,
            } => {
                out.extend_from_slice(&t_ms.to_le_bytes());
                out.push(camera_id);
                out.extend_from_slice(&count.to_le_bytes());
            }
        }
    }

    /// Parses a payload whose length has already been checked against the id.
    fn read_payload(id: u8, p: &[u8]) -> Option<Message> {
        let u16_at = |i: usize| u16::from_le_bytes([p[i], p[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes([p[i], p[i + 1], p[i + 2], p[i + 3]]);
        let f32_at = |i: usize| f32::from_le_bytes([p[i], p[i + 1], p[i + 2], p[i + 3]]);
        use msg_id::*;
        Some(match id {
            HEARTBEAT => Message::Heartbeat {
                mode: p[0],
                armed: p[1],
            },
            POSITION => Message::Position {
                t_ms: u32_at(0),
                x: f32_at(4),
                y: f32_at(8),
                heading: f32_at(12),
                speed: f32_at(16),
            },
            POWER => Message::Power {
                soc_wh: f32_at(0),
                solar_w: f32_at(4),
                load_w: f32_at(8),
            },
            TRASH_STATUS => Message::TrashStatus {
                payload_kg: f32_at(0),
                items: u16_at(4),
            },
            MISSION_COUNT => Message::MissionCount { count: u16_at(0) },
            MISSION_ITEM => Message::MissionItem {
                index: u16_at(0),
                x: f32_at(2),
                y: f32_at(6),
                accept_radius: f32_at(10),
            },
            MISSION_ACK => Message::MissionAck { result: p[0] },
            COMMAND => Message::Command { cmd: p[0] },
            COMMAND_ACK => Message::CommandAck {
                cmd: p[0],
                result: p[1],
            },
            FENCE_ALERT => Message::FenceAlert {
                t_ms: u32_at(0),
                camera_id: p[4],
                count: u16_at(5),
            },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub seq: u8,
    pub sys_id: u8,
    pub comp_id: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub header: Header,
    pub message: Message,
}

pub fn encode(msg: &Message, seq: u8, sys_id: u8, comp_id: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAX_FRAME_LEN);
    out.extend_from_slice(&[MAGIC, 0, seq, sys_id, comp_id, msg.id()]);
    msg.write_payload(&mut out);
    out[1] = (out.len() - HEADER_LEN) as u8;
    let crc = crc16(&out[1..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Problems found while scanning a byte stream. None of them stop decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// Bytes skipped while hunting for the next magic byte.
    #[error("skipped {skipped} bytes of garbage at offset {at}")]
    Garbage { at: usize, skipped: usize },
    #[error("bad crc in frame at offset {at}")]
    BadCrc { at: usize },
    #[error("unknown message id {id} at offset {at}")]
    UnknownMsgId { at: usize, id: u8 },
    #[error("message id {id} with payload length {len} at offset {at}")]
    BadLength { at: usize, id: u8, len: u8 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decoded {
    pub packets: Vec<Packet>,
    pub errors: Vec<DecodeError>,
}

/// Decodes every complete frame in `buf`. Returns the decoded output and the
/// number of bytes consumed; the unconsumed tail is a partial frame that
/// starts with the magic byte and is shorter than [`MAX_FRAME_LEN`].
fn scan(buf: &[u8], base: usize, out: &mut Decoded) -> usize {
    let mut i = 0;
    while i < buf.len() {
        if buf[i] != MAGIC {
            let skipped = buf[i..]
                .iter()
                .position(|&b| b == MAGIC)
                .unwrap_or(buf.len() - i);
            out.errors.push(DecodeError::Garbage {
                at: base + i,
                skipped,
            });
            i += skipped;
            continue;
        }
        let rest = &buf[i..];
        if rest.len() < HEADER_LEN {
            return i;
        }
        let len = rest[1];
        let frame_len = OVERHEAD + len as usize;
        if rest.len() < frame_len {
            return i;
        }
        let body = &rest[1..HEADER_LEN + len as usize];
        let crc = u16::from_le_bytes([rest[frame_len - 2], rest[frame_len - 1]]);
        if crc16(body) != crc {
            out.errors.push(DecodeError::BadCrc { at: base + i });
            // the length byte cannot be trusted; resync on the next magic
            i += 1;
            continue;
        }
        let id = rest[5];
        match payload_len(id) {
            None => out
                .errors
                .push(DecodeError::UnknownMsgId { at: base + i, id }),
            Some(expected) if expected != len as usize => out.errors.push(DecodeError::BadLength {
                at: base + i,
                id,
                len,
            }),
            Some(_) => {
                let message = Message::read_payload(id, &rest[HEADER_LEN..HEADER_LEN + len as usize])
                    .expect("known id with checked length");
                out.packets.push(Packet {
                    header: Header {
                        seq: rest[2],
                        sys_id: rest[3],
                        comp_id: rest[4],
                    },
                    message,
                });
            }
        }
        i += frame_len;
    }
    i
}

/// One-shot decode of an arbitrary buffer. Returns decoded packets, errors
/// and the trailing partial frame.
pub fn decode_stream(buffer: &[u8]) -> (Decoded, Vec<u8>) {
    let mut out = Decoded::default();
    let used = scan(buffer, 0, &mut out);
    (out, buffer[used..].to_vec())
}

/// Incremental decoder carrying the partial-frame remainder between feeds.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    pending: Vec<u8>,
    offset: usize,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, chunk: &[u8]) -> Decoded {
        self.pending.extend_from_slice(chunk);
        let mut out = Decoded::default();
        let used = scan(&self.pending, self.offset, &mut out);
        self.pending.drain(..used);
        self.offset += used;
        out
    }

    pub fn remainder(&self) -> &[u8] {
        &self.pending
    }
}

/// Wrapping sequence counter and source identity for outgoing frames.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub sys_id: u8,
    pub comp_id: u8,
    seq: u8,
}

impl Encoder {
    pub fn new(sys_id: u8, comp_id: u8) -> Self {
        Self {
            sys_id,
            comp_id,
            seq: 0,
        }
    }

    pub fn encode(&mut self, msg: &Message) -> Vec<u8> {
        let frame = encode(msg, self.seq, self.sys_id, self.comp_id);
        self.seq = self.seq.wrapping_add(1);
        frame
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_check_value() {
        assert_eq!(crc16(b"123456789"), 0x29B1);
    }

    #[test]
    fn heartbeat_layout() {
        let f = encode(&Message::Heartbeat { mode: 2, armed: 1 }, 0, 1, 1);
        assert_eq!(&f[..8], &[0xC7, 0x02, 0x00, 0x01, 0x01, 0x00, 0x02, 0x01]);
        assert_eq!(f.len(), 10);
    }

    #[test]
    fn mission_count_zero_payload() {
        let f = encode(&Message::MissionCount { count: 0 }, 9, 255, 0);
        assert_eq!(&f[6..8], &[0, 0]);
    }

    #[test]
    fn empty_buffer() {
        let (d, rest) = decode_stream(&[]);
        assert!(d.packets.is_empty());
        assert!(d.errors.is_empty());
        assert!(rest.is_empty());
    }

    #[test]
    fn partial_frame_is_remainder() {
        let f = encode(&Message::Command { cmd: 3 }, 1, 255, 0);
        let (d, rest) = decode_stream(&f[..5]);
        assert!(d.packets.is_empty() && d.errors.is_empty());
        assert_eq!(rest, &f[..5]);
    }

    #[test]
    fn unknown_id_with_valid_crc() {
        let mut f = vec![MAGIC, 1, 0, 1, 1, 42, 7];
        let crc = crc16(&f[1..]);
        f.extend_from_slice(&crc.to_le_bytes());
        f.extend(encode(&Message::Command { cmd: 1 }, 0, 255, 0));
        let (d, rest) = decode_stream(&f);
        assert_eq!(d.errors, vec![DecodeError::UnknownMsgId { at: 0, id: 42 }]);
        assert_eq!(d.packets.len(), 1);
        assert!(rest.is_empty());
    }

    #[test]
    fn wrong_length_for_id() {
        let mut f = vec![MAGIC, 1, 0, 1, 1, msg_id::HEARTBEAT, 7];
        let crc = crc16(&f[1..]);
        f.extend_from_slice(&crc.to_le_bytes());
        let (d, _) = decode_stream(&f);
        assert!(d.packets.is_empty());
        assert!(matches!(d.errors[0], DecodeError::BadLength { len: 1, .. }));
    }

    #[test]
    fn encoder_wraps_seq() {
        let mut e = Encoder::new(SYS_BOT, 1);
        for _ in 0..255 {
            e.encode(&Message::MissionAck { result: 0 });
        }
        assert_eq!(e.encode(&Message::MissionAck { result: 0 })[2], 255);
        assert_eq!(e.encode(&Message::MissionAck { result: 0 })[2], 0);
    }
}
