use serde::{Deserialize, Serialize};
use watercare_core::protocol::{Message, SYS_BOT};
use watercare_core::Mode;

use crate::log::{EventBody, EventKind, EventRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    /// Bot clock.
    pub t_ms: u32,
    pub x: f32,
    pub y: f32,
    pub heading: f32,
    pub speed: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFix {
    pub soc_wh: f32,
    pub solar_w: f32,
    pub load_w: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrashFix {
    pub payload_kg: f32,
    pub items: u16,
}

/// Latest known bot state, folded from TELEMETRY records in log order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BotSnapshot {
    /// Service clock at the most recent heartbeat.
    pub last_heartbeat: Option<u64>,
    pub mode: Option<Mode>,
    pub mode_code: Option<u8>,
    pub armed: bool,
    pub position: Option<PositionFix>,
    pub power: Option<PowerFix>,
    pub trash: Option<TrashFix>,
    /// Derived on read: a heartbeat arrived within the link timeout.
    pub link_ok: bool,
}

impl BotSnapshot {
    /// Folds one record. Only bot telemetry changes the snapshot.
    pub fn apply(&mut self, rec: &EventRecord) {
        if rec.kind != EventKind::Telemetry {
            return;
        }
        let EventBody::Message {
            sys_id: SYS_BOT,
            message,
            ..
        } = &rec.body
        else {
            return;
        };
        match *message {
            Message::Heartbeat { mode, armed } => {
                self.last_heartbeat = Some(rec.t_ms);
                self.mode_code = Some(mode);
                self.mode = Mode::from_u8(mode);
                self.armed = armed != 0;
            }
            Message::Position {
                t_ms,
                x,
                y,
                heading,
                speed,
            } => {
                self.position = Some(PositionFix {
                    t_ms,
                    x,
                    y,
                    heading,
                    speed,
                })
            }
            Message::Power {
                soc_wh,
                solar_w,
                load_w,
            } => {
                self.power = Some(PowerFix {
                    soc_wh,
                    solar_w,
                    load_w,
                })
            }
            Message::TrashStatus { payload_kg, items } => {
                self.trash = Some(TrashFix { payload_kg, items })
            }
            _ => {}
        }
    }

    pub fn replay<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut s = Self::default();
        for r in records {
            s.apply(r);
        }
        s
    }

    /// Copy with `link_ok` evaluated at `now_ms`.
    pub fn at(&self, now_ms: u64, link_timeout_ms: u64) -> Self {
        Self {
            link_ok: self
                .last_heartbeat
                .is_some_and(|hb| now_ms.saturating_sub(hb) <= link_timeout_ms),
            ..self.clone()
        }
    }
}
