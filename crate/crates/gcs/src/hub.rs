//! Fanout to live subscribers. Publishing never waits: each subscriber owns
//! a bounded queue that drops its oldest entry when full and reports the
//! loss as a gap marker ahead of the surviving entries.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Weak};

use parking_lot::Mutex;
use serde::Serialize;
use tokio::sync::Notify;
use watercare_core::protocol::Message;

use crate::log::{EventBody, EventKind, EventRecord};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamItem {
    Event(EventRecord),
    /// `dropped` records were discarded because the subscriber fell behind.
    Gap { dropped: u64 },
}

impl StreamItem {
    /// Server-sent event name.
    pub fn event_name(&self) -> &'static str {
        match self {
            StreamItem::Event(r) if r.kind == EventKind::Alert => "alert",
            StreamItem::Event(r) if r.kind == EventKind::Telemetry => "telemetry",
            _ => "system",
        }
    }
}

#[derive(Debug, Default)]
struct Queue {
    items: VecDeque<StreamItem>,
    dropped: u64,
}

#[derive(Debug)]
struct Shared {
    id: u64,
    created_at: u64,
    capacity: usize,
    queue: Mutex<Queue>,
    notify: Notify,
}

impl Shared {
    fn push(&self, item: StreamItem) {
        {
            let mut q = self.queue.lock();
            if q.items.len() >= self.capacity {
                q.items.pop_front();
                q.dropped += 1;
            }
            q.items.push_back(item);
        }
        self.notify.notify_one();
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
#[derive(Debug)]
pub struct Subscription {
    shared: Arc<Shared>,
}

impl Subscription {
    pub fn id(&self) -> u64 {
        self.shared.id
    }

    pub fn created_at(&self) -> u64 {
        self.shared.created_at
    }

    /// Queued entries, not counting a pending gap marker.
    pub fn pending(&self) -> usize {
        self.shared.queue.lock().items.len()
    }

    pub fn try_recv(&self) -> Option<StreamItem> {
        let mut q = self.shared.queue.lock();
        if q.dropped > 0 {
            let dropped = std::mem::take(&mut q.dropped);
            return Some(StreamItem::Gap { dropped });
        }
        q.items.pop_front()
    }

    pub async fn recv(&self) -> StreamItem {
        loop {
            if let Some(item) = self.try_recv() {
                return item;
            }
            self.shared.notify.notified().await;
        }
    }
}

#[derive(Debug)]
pub struct Hub {
    capacity: usize,
    telemetry_interval_ms: u64,
    subscribers: Mutex<Vec<Weak<Shared>>>,
    next_id: AtomicU64,
    last_telemetry: Mutex<HashMap<(u8, u8), u64>>,
}

impl Hub {
    /// `telemetry_hz <= 0` forwards every telemetry record.
    pub fn new(capacity: usize, telemetry_hz: f64) -> Self {
        let telemetry_interval_ms = if telemetry_hz > 0.0 {
            (1000.0 / telemetry_hz).round() as u64
        } else {
            0
        };
        Self {
            capacity: capacity.max(1),
            telemetry_interval_ms,
            subscribers: Mutex::new(Vec::new()),
            next_id: AtomicU64::new(1),
            last_telemetry: Mutex::new(HashMap::new()),
        }
    }

    pub fn subscribe(&self, now_ms: u64) -> Subscription {
        let shared = Arc::new(Shared {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            created_at: now_ms,
            capacity: self.capacity,
            queue: Mutex::new(Queue::default()),
            notify: Notify::new(),
        });
        self.subscribers.lock().push(Arc::downgrade(&shared));
        Subscription { shared }
    }

    pub fn subscriber_count(&self) -> usize {
        let mut subs = self.subscribers.lock();
        subs.retain(|w| w.strong_count() > 0);
        subs.len()
    }

    /// Alerts always go out; telemetry is thinned per (source, message id).
    fn wanted(&self, rec: &EventRecord) -> bool {
        match rec.kind {
            EventKind::Alert => true,
            EventKind::Telemetry => {
                let EventBody::Message {
                    sys_id, message, ..
                } = &rec.body
                else {
                    return false;
                };
                let key = (*sys_id, Message::id(message));
                let mut last = self.last_telemetry.lock();
                match last.get(&key) {
                    Some(&t) if rec.t_ms < t + self.telemetry_interval_ms => false,
                    _ => {
                        last.insert(key, rec.t_ms);
                        true
                    }
                }
            }
            _ => false,
        }
    }

    /// Returns the number of subscribers the record was queued for.
    pub fn publish(&self, rec: &EventRecord) -> usize {
        if !self.wanted(rec) {
            return 0;
        }
        let mut subs = self.subscribers.lock();
        subs.retain(|w| w.strong_count() > 0);
        let mut delivered = 0;
        for sub in subs.iter().filter_map(Weak::upgrade) {
            sub.push(StreamItem::Event(rec.clone()));
            delivered += 1;
        }
        delivered
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn telemetry(seq: u64, t_ms: u64) -> EventRecord {
        EventRecord {
            seq,
            t_ms,
            kind: EventKind::Telemetry,
            body: EventBody::Message {
                sys_id: 1,
                comp_id: 1,
                seq: 0,
                message: Message::Heartbeat { mode: 0, armed: 0 },
            },
        }
    }

    #[test]
    fn overflow_emits_one_gap_then_newest() {
        let hub = Hub::new(4, 0.0);
        let sub = hub.subscribe(0);
        for i in 1..=10 {
            hub.publish(&telemetry(i, i));
        }
        assert_eq!(sub.try_recv(), Some(StreamItem::Gap { dropped: 6 }));
        let seqs: Vec<u64> = std::iter::from_fn(|| sub.try_recv())
            .map(|i| match i {
                StreamItem::Event(r) => r.seq,
                StreamItem::Gap { .. } => panic!("second gap"),
            })
            .collect();
        assert_eq!(seqs, [7, 8, 9, 10]);
    }

    #[test]
    fn telemetry_thinned_to_rate() {
        let hub = Hub::new(100, 2.0);
        let sub = hub.subscribe(0);
        for t in (0..3000).step_by(100) {
            hub.publish(&telemetry(t + 1, t));
        }
        let times: Vec<u64> = std::iter::from_fn(|| sub.try_recv())
            .map(|i| match i {
                StreamItem::Event(r) => r.t_ms,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(times, [0, 500, 1000, 1500, 2000, 2500]);
    }

    #[test]
    fn dropped_subscription_is_pruned() {
        let hub = Hub::new(8, 0.0);
        let a = hub.subscribe(0);
        let _b = hub.subscribe(0);
        assert_eq!(hub.subscriber_count(), 2);
        drop(a);
        assert_eq!(hub.subscriber_count(), 1);
    }
}
