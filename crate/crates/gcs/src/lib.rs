//! Ground-control service: terminates protocol links from the bot and the
//! fence cameras, keeps the latest bot snapshot, persists every event to an
//! append-only log and fans alerts and thinned telemetry out to operators.

pub mod clock;
pub mod http;
pub mod hub;
pub mod log;
pub mod loopback;
pub mod net;
pub mod server;
pub mod service;
pub mod snapshot;

pub use clock::{Clock, ManualClock, SystemClock};
pub use hub::{StreamItem, Subscription};
pub use log::{EventBody, EventKind, EventLog, EventRecord, LogError};
pub use loopback::LoopbackLink;
pub use server::{Server, ServerConfig, ServerError, DEFAULT_HTTP_PORT, DEFAULT_PROTO_PORT};
pub use service::{Gcs, GcsConfig, Outcome, Rejection, Sink, Ticket};
pub use snapshot::BotSnapshot;
