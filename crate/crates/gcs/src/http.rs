//! Operator HTTP API and server-sent event stream.

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use watercare_core::{Command, Waypoint};

use crate::hub::StreamItem;
use crate::service::{Gcs, Outcome, Rejection};

pub const KEEP_ALIVE: Duration = Duration::from_secs(15);
pub const DEFAULT_EVENT_LIMIT: usize = 1000;
pub const MAX_EVENT_LIMIT: usize = 10_000;

#[derive(Clone)]
struct App {
    gcs: Arc<Gcs>,
    token: Option<Arc<str>>,
}

pub fn router(gcs: Arc<Gcs>, token: Option<String>, ui_dir: Option<PathBuf>) -> Router {
    let app = App {
        gcs,
        token: token.filter(|t| !t.is_empty()).map(Into::into),
    };
    let api = Router::new()
        .route("/api/state", get(state))
        .route("/api/events", get(events))
        .route("/api/mission", post(mission))
        .route("/api/command", post(command))
        .route("/api/stream", get(stream))
        .route_layer(middleware::from_fn_with_state(app.clone(), auth))
        .with_state(app);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bearer token in the header, or `?token=` for clients that cannot set
/// headers on an event stream.
async fn auth(State(app): State<App>, req: Request, next: Next) -> Response {
    let Some(expected) = app.token.as_deref() else {
        return next.run(req).await;
    };
    let header_ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == expected);
    let query_ok = req.uri().query().is_some_and(|q| {
        q.split('&')
            .filter_map(|kv| kv.split_once('='))
            .any(|(k, v)| k == "token" && v == expected)
    });
    if header_ok || query_ok {
        next.run(req).await
    } else {
        (StatusCode::UNAUTHORIZED, Json(Reply::rejected("unauthorized", None))).into_response()
    }
}

async fn state(State(app): State<App>) -> impl IntoResponse {
    Json(app.gcs.query_state())
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    limit: Option<usize>,
}

async fn events(State(app): State<App>, Query(q): Query<EventsQuery>) -> impl IntoResponse {
    let limit = q.limit.unwrap_or(DEFAULT_EVENT_LIMIT).min(MAX_EVENT_LIMIT);
    Json(app.gcs.query_events(q.since, limit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<u8>,
}

impl Reply {
    fn rejected(reason: &str, code: Option<u8>) -> Self {
        Self {
            accepted: false,
            reason: Some(reason.into()),
            code,
        }
    }
}

fn respond(outcome: Outcome) -> (StatusCode, Json<Reply>) {
    match outcome {
        Ok(()) => (
            StatusCode::OK,
            Json(Reply {
                accepted: true,
                reason: None,
                code: None,
            }),
        ),
        Err(r) => {
            let status = match r {
                Rejection::Invalid(_) => StatusCode::BAD_REQUEST,
                Rejection::NoLink => StatusCode::SERVICE_UNAVAILABLE,
                Rejection::Busy | Rejection::Bot(_) => StatusCode::CONFLICT,
                Rejection::Timeout => StatusCode::GATEWAY_TIMEOUT,
            };
            (status, Json(Reply::rejected(&r.to_string(), r.code())))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MissionBody {
    waypoints: Vec<Waypoint>,
}

async fn mission(State(app): State<App>, Json(body): Json<MissionBody>) -> impl IntoResponse {
    respond(app.gcs.submit_mission(body.waypoints).await)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandBody {
    cmd: String,
}

async fn command(State(app): State<App>, Json(body): Json<CommandBody>) -> impl IntoResponse {
    let Some(cmd) = Command::parse(&body.cmd) else {
        return respond(Err(Rejection::Invalid(format!("unknown command `{}`", body.cmd))));
    };
    respond(app.gcs.submit_command(cmd as u8).await)
}

fn to_event(item: &StreamItem) -> Event {
    let data = match item {
        StreamItem::Event(rec) => serde_json::to_string(rec),
        gap => serde_json::to_string(gap),
    }
    .expect("records serialize");
    Event::default().event(item.event_name()).data(data)
}

async fn stream(State(app): State<App>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let sub = app.gcs.subscribe();
    let events = futures::stream::unfold(sub, |sub| async move {
        let item = sub.recv().await;
        Some((Ok(to_event(&item)), sub))
    });
    Sse::new(events).keep_alive(KeepAlive::new().interval(KEEP_ALIVE).text("keep-alive"))
}
