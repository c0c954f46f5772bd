//! The ground-control state store. One writer path (ingest and outgoing
//! requests, serialized on the log lock), many readers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::oneshot;
use watercare_core::protocol::{
    command_result, mission_result, DecodeError, Encoder, Message, Packet, SYS_BOT,
    SYS_FENCE_CAMERA, SYS_GCS,
};
use watercare_core::{Command, Waypoint};

use crate::clock::Clock;
use crate::hub::{Hub, Subscription, DEFAULT_QUEUE_CAPACITY};
use crate::log::{EventBody, EventKind, EventLog, EventRecord};
use crate::snapshot::BotSnapshot;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcsConfig {
    /// Heartbeat age beyond which the link is reported down.
    pub link_timeout_ms: u64,
    pub ack_timeout_ms: u64,
    /// Log one of every N telemetry messages per (source, id).
    pub telemetry_log_every: u32,
    /// Telemetry rate forwarded to subscribers; 0 forwards everything.
    pub subscriber_telemetry_hz: f64,
    pub queue_capacity: usize,
}

impl Default for GcsConfig {
    fn default() -> Self {
        Self {
            link_timeout_ms: 3000,
            ack_timeout_ms: 2000,
            telemetry_log_every: 1,
            subscriber_telemetry_hz: 2.0,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("no-link")]
    NoLink,
    #[error("busy")]
    Busy,
    #[error("timeout")]
    Timeout,
    /// Result code carried by the bot's acknowledgement.
    #[error("rejected by bot (code {0})")]
    Bot(u8),
}

impl Rejection {
    pub fn code(&self) -> Option<u8> {
        match self {
            Rejection::Bot(c) => Some(*c),
            _ => None,
        }
    }
}

pub type Outcome = Result<(), Rejection>;

/// Writes one encoded frame towards the bot; `false` means the link is gone.
pub type Sink = Arc<dyn Fn(&[u8]) -> bool + Send + Sync>;

struct BotLink {
    id: u64,
    sink: Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Request {
    Mission,
    Command(u8),
}

impl Request {
    fn label(self) -> String {
        match self {
            Request::Mission => "mission".into(),
            Request::Command(c) => match Command::from_u8(c) {
                Some(cmd) => format!("command {}", cmd.name()),
                None => format!("command {c}"),
            },
        }
    }
}

struct Pending {
    id: u64,
    request: Request,
    deadline_ms: u64,
    reply: oneshot::Sender<Outcome>,
}

/// Handle for an outstanding request, resolved by [`Gcs::wait`] or polled
/// with [`Gcs::poll`].
#[derive(Debug)]
pub struct Ticket {
    id: u64,
    rx: oneshot::Receiver<Outcome>,
}

pub struct Gcs {
    config: GcsConfig,
    clock: Arc<dyn Clock>,
    log: Mutex<EventLog>,
    snapshot: RwLock<BotSnapshot>,
    hub: Hub,
    link: Mutex<Option<BotLink>>,
    encoder: Mutex<Encoder>,
    pending: Mutex<Option<Pending>>,
    gate: tokio::sync::Mutex<()>,
    log_counters: Mutex<HashMap<(u8, u8), u64>>,
    last_t: AtomicU64,
    next_id: AtomicU64,
}

impl Gcs {
    /// Builds the service over `log`, folding any records it already holds.
    pub fn new(config: GcsConfig, clock: Arc<dyn Clock>, log: EventLog) -> Arc<Self> {
        let snapshot = BotSnapshot::replay(log.records());
        let last_t = log.records().last().map_or(0, |r| r.t_ms);
        Arc::new(Self {
            hub: Hub::new(config.queue_capacity, config.subscriber_telemetry_hz),
            config,
            clock,
            log: Mutex::new(log),
            snapshot: RwLock::new(snapshot),
            link: Mutex::new(None),
            encoder: Mutex::new(Encoder::new(SYS_GCS, 0)),
            pending: Mutex::new(None),
            gate: tokio::sync::Mutex::new(()),
            log_counters: Mutex::new(HashMap::new()),
            last_t: AtomicU64::new(last_t),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &GcsConfig {
        &self.config
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Event stamps never run backwards, even if the wall clock does.
    fn stamp(&self) -> u64 {
        let now = self.clock.now_ms();
        self.last_t.fetch_max(now, Ordering::SeqCst).max(now)
    }

    fn record(&self, kind: EventKind, body: EventBody) -> Option<EventRecord> {
        let mut log = self.log.lock();
        let t = self.stamp();
        let rec = match log.append(t, kind, body) {
            Ok(rec) => rec.clone(),
            Err(e) => {
                tracing::error!(error = %e, "event log write failed");
                return None;
            }
        };
        if matches!(kind, EventKind::Alert | EventKind::Command | EventKind::Ack) {
            if let Err(e) = log.flush() {
                tracing::error!(error = %e, "event log flush failed");
            }
        }
        self.snapshot.write().apply(&rec);
        self.hub.publish(&rec);
        Some(rec)
    }

    fn notice(&self, text: String, sys_id: Option<u8>) {
        tracing::warn!(sys_id, "{text}");
        self.record(EventKind::System, EventBody::Notice { text, sys_id });
    }

    /// Takes in one decoded frame from any connection.
    pub fn ingest(&self, packet: &Packet) {
        let h = packet.header;
        let msg = packet.message;
        if !matches!(h.sys_id, SYS_BOT | SYS_FENCE_CAMERA) {
            self.notice(
                format!("{} from unknown system {}", msg.name(), h.sys_id),
                Some(h.sys_id),
            );
            return;
        }
        if !msg.is_finite() {
            self.notice(format!("{} with non-finite field", msg.name()), Some(h.sys_id));
            return;
        }
        let kind = match msg {
            Message::Heartbeat { .. }
            | Message::Position { .. }
            | Message::Power { .. }
            | Message::TrashStatus { .. } => EventKind::Telemetry,
            Message::FenceAlert { .. } => EventKind::Alert,
            Message::MissionAck { .. } | Message::CommandAck { .. } => EventKind::Ack,
            Message::MissionCount { .. } | Message::MissionItem { .. } | Message::Command { .. } => {
                self.notice(format!("unexpected {} at the ground station", msg.name()), Some(h.sys_id));
                return;
            }
        };
        if kind == EventKind::Telemetry && self.config.telemetry_log_every > 1 {
            let mut counters = self.log_counters.lock();
            let n = counters.entry((h.sys_id, msg.id())).or_insert(0);
            *n += 1;
            if !(*n - 1).is_multiple_of(u64::from(self.config.telemetry_log_every)) {
                drop(counters);
                // still fresh for readers, just not persisted
                let rec = EventRecord {
                    seq: 0,
                    t_ms: self.stamp(),
                    kind,
                    body: message_body(packet),
                };
                self.snapshot.write().apply(&rec);
                return;
            }
        }
        self.record(kind, message_body(packet));
        if kind == EventKind::Ack && h.sys_id == SYS_BOT {
            self.resolve(msg);
        }
    }

    /// Records a stream decoding problem seen on a connection.
    pub fn note_decode_error(&self, err: &DecodeError) {
        self.notice(format!("link: {err}"), None);
    }

    fn resolve(&self, msg: Message) {
        let mut slot = self.pending.lock();
        let outcome = match (slot.as_ref().map(|p| p.request), msg) {
            (Some(Request::Mission), Message::MissionAck { result }) => match result {
                mission_result::OK => Ok(()),
                code => Err(Rejection::Bot(code)),
            },
            (Some(Request::Command(c)), Message::CommandAck { cmd, result }) if c == cmd => {
                match result {
                    command_result::ACCEPTED => Ok(()),
                    code => Err(Rejection::Bot(code)),
                }
            }
            _ => return,
        };
        if let Some(p) = slot.take() {
            let _ = p.reply.send(outcome);
        }
    }

    /// Registers the connection that reaches the bot and returns its id.
    pub fn attach_bot(&self, sink: Sink) -> u64 {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        *self.link.lock() = Some(BotLink { id, sink });
        id
    }

    /// Forgets the bot connection if it is still `id`.
    pub fn detach_bot(&self, id: u64) {
        let mut link = self.link.lock();
        if link.as_ref().is_some_and(|l| l.id == id) {
            *link = None;
        }
    }

    pub fn bot_attached(&self) -> bool {
        self.link.lock().is_some()
    }

    fn transmit(&self, frames: &[Message]) -> bool {
        let Some(sink) = self.link.lock().as_ref().map(|l| l.sink.clone()) else {
            return false;
        };
        let mut enc = self.encoder.lock();
        frames.iter().all(|m| sink(&enc.encode(m)))
    }

    fn begin(&self, request: Request, frames: Vec<Message>, body: EventBody) -> Result<Ticket, Rejection> {
        if !self.bot_attached() {
            return Err(Rejection::NoLink);
        }
        let mut slot = self.pending.lock();
        let now = self.clock.now_ms();
        if let Some(p) = slot.as_ref() {
            if now < p.deadline_ms {
                return Err(Rejection::Busy);
            }
        }
        if let Some(stale) = slot.take() {
            self.expire(stale);
        }
        let (tx, rx) = oneshot::channel();
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        *slot = Some(Pending {
            id,
            request,
            deadline_ms: now + self.config.ack_timeout_ms,
            reply: tx,
        });
        drop(slot);
        self.record(EventKind::Command, body);
        if !self.transmit(&frames) {
            self.pending.lock().take();
            self.notice(format!("{}: bot link lost while sending", request.label()), None);
            return Err(Rejection::NoLink);
        }
        Ok(Ticket { id, rx })
    }

    fn expire(&self, p: Pending) {
        self.record(
            EventKind::Ack,
            EventBody::Outcome {
                request: p.request.label(),
                accepted: false,
                reason: Rejection::Timeout.to_string(),
            },
        );
        let _ = p.reply.send(Err(Rejection::Timeout));
    }

    /// Validates and transmits a mission upload without waiting for the ack.
    pub fn begin_mission(&self, waypoints: Vec<Waypoint>) -> Result<Ticket, Rejection> {
        if waypoints.is_empty() || waypoints.len() > u16::MAX as usize {
            return Err(Rejection::Invalid(format!(
                "mission needs 1..=65535 waypoints, got {}",
                waypoints.len()
            )));
        }
        let as_f32 = |v: f64| (v as f32).is_finite();
        if let Some(i) = waypoints
            .iter()
            .position(|w| !w.is_valid() || !as_f32(w.x) || !as_f32(w.y) || !as_f32(w.accept_radius))
        {
            return Err(Rejection::Invalid(format!(
                "waypoint {i} needs finite coordinates and a positive radius"
            )));
        }
        let mut frames = vec![Message::MissionCount {
            count: waypoints.len() as u16,
        }];
        frames.extend(waypoints.iter().enumerate().map(|(i, w)| Message::MissionItem {
            index: i as u16,
            x: w.x as f32,
            y: w.y as f32,
            accept_radius: w.accept_radius as f32,
        }));
        self.begin(Request::Mission, frames, EventBody::MissionUpload { waypoints })
    }

    /// Validates and transmits a command without waiting for the ack.
    pub fn begin_command(&self, code: u8) -> Result<Ticket, Rejection> {
        let Some(cmd) = Command::from_u8(code) else {
            return Err(Rejection::Invalid(format!("unknown command {code}")));
        };
        self.begin(
            Request::Command(code),
            vec![Message::Command { cmd: code }],
            EventBody::Command {
                cmd: cmd.name().into(),
                code,
            },
        )
    }

    /// Non-blocking check on a ticket; applies the ack deadline.
    pub fn poll(&self, ticket: &mut Ticket) -> Option<Outcome> {
        match ticket.rx.try_recv() {
            Ok(outcome) => Some(outcome),
            Err(oneshot::error::TryRecvError::Closed) => Some(Err(Rejection::Timeout)),
            Err(oneshot::error::TryRecvError::Empty) => {
                let mut slot = self.pending.lock();
                let due = slot
                    .as_ref()
                    .is_some_and(|p| p.id == ticket.id && self.clock.now_ms() >= p.deadline_ms);
                if due {
                    self.expire(slot.take().expect("checked"));
                    return Some(Err(Rejection::Timeout));
                }
                None
            }
        }
    }

    /// Awaits the ack, giving up after the configured timeout.
    pub async fn wait(&self, ticket: Ticket) -> Outcome {
        let Ticket { id, rx } = ticket;
        let limit = Duration::from_millis(self.config.ack_timeout_ms);
        match tokio::time::timeout(limit, rx).await {
            Ok(Ok(outcome)) => outcome,
            Ok(Err(_)) => Err(Rejection::Timeout),
            Err(_) => {
                let stale = {
                    let mut slot = self.pending.lock();
                    match slot.as_ref() {
                        Some(p) if p.id == id => slot.take(),
                        _ => None,
                    }
                };
                match stale {
                    Some(p) => {
                        self.expire(p);
                        Err(Rejection::Timeout)
                    }
                    // resolved in the race with the timer
                    None => Err(Rejection::Timeout),
                }
            }
        }
    }

    /// Uploads a mission and waits for the bot to acknowledge it.
    pub async fn submit_mission(&self, waypoints: Vec<Waypoint>) -> Outcome {
        let _turn = self.gate.lock().await;
        let ticket = self.begin_mission(waypoints)?;
        self.wait(ticket).await
    }

    /// Sends a command and waits for the bot to acknowledge it.
    pub async fn submit_command(&self, code: u8) -> Outcome {
        let _turn = self.gate.lock().await;
        let ticket = self.begin_command(code)?;
        self.wait(ticket).await
    }

    pub fn query_state(&self) -> BotSnapshot {
        self.snapshot
            .read()
            .at(self.clock.now_ms(), self.config.link_timeout_ms)
    }

    pub fn query_events(&self, since: u64, limit: usize) -> Vec<EventRecord> {
        self.log.lock().since(since, limit).to_vec()
    }

    pub fn last_seq(&self) -> u64 {
        self.log.lock().last_seq()
    }

    pub fn subscribe(&self) -> Subscription {
        self.hub.subscribe(self.clock.now_ms())
    }

    pub fn subscriber_count(&self) -> usize {
        self.hub.subscriber_count()
    }

    pub fn flush(&self) -> std::io::Result<()> {
        self.log.lock().flush()
    }
}

fn message_body(p: &Packet) -> EventBody {
    EventBody::Message {
        sys_id: p.header.sys_id,
        comp_id: p.header.comp_id,
        seq: p.header.seq,
        message: p.message,
    }
}
