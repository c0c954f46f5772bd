use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tokio::net::TcpListener;

use crate::clock::{Clock, SystemClock};
use crate::log::{EventLog, LogError};
use crate::service::{Gcs, GcsConfig};
use crate::{http, net};

pub const DEFAULT_HTTP_PORT: u16 = 8081;
pub const DEFAULT_PROTO_PORT: u16 = 9000;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub http_addr: SocketAddr,
    pub proto_addr: SocketAddr,
    /// In-memory log when absent.
    pub log_path: Option<PathBuf>,
    pub token: Option<String>,
    pub ui_dir: Option<PathBuf>,
    pub gcs: GcsConfig,
    pub flush_interval: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            http_addr: SocketAddr::from(([0, 0, 0, 0], DEFAULT_HTTP_PORT)),
            proto_addr: SocketAddr::from(([0, 0, 0, 0], DEFAULT_PROTO_PORT)),
            log_path: None,
            token: None,
            ui_dir: None,
            gcs: GcsConfig::default(),
            flush_interval: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A service with its listeners bound but not yet serving.
pub struct Server {
    pub gcs: Arc<Gcs>,
    http: TcpListener,
    proto: TcpListener,
    config: ServerConfig,
}

impl Server {
    pub async fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        Self::bind_with_clock(config, Arc::new(SystemClock)).await
    }

    /// Opens the log before touching the network so that a bad log path
    /// fails without side effects.
    pub async fn bind_with_clock(config: ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, ServerError> {
        let log = match &config.log_path {
            Some(p) => EventLog::open(p)?,
            None => EventLog::in_memory(),
        };
        let bind = |addr| async move {
            TcpListener::bind(addr)
                .await
                .map_err(|source| ServerError::Bind { addr, source })
        };
        let http = bind(config.http_addr).await?;
        let proto = bind(config.proto_addr).await?;
        let gcs = Gcs::new(config.gcs.clone(), clock, log);
        Ok(Self {
            gcs,
            http,
            proto,
            config,
        })
    }

    pub fn http_addr(&self) -> io::Result<SocketAddr> {
        self.http.local_addr()
    }

    pub fn proto_addr(&self) -> io::Result<SocketAddr> {
        self.proto.local_addr()
    }

    /// Serves until `shutdown` resolves, then flushes the log.
    pub async fn run(self, shutdown: impl Future<Output = ()>) -> Result<(), ServerError> {
        let Server {
            gcs,
            http,
            proto,
            config,
        } = self;
        tracing::info!(http = %http.local_addr()?, proto = %proto.local_addr()?, "gcs listening");
        let app = http::router(gcs.clone(), config.token.clone(), config.ui_dir.clone());
        let flusher = {
            let gcs = gcs.clone();
            let every = config.flush_interval;
            async move {
                let mut tick = tokio::time::interval(every);
                loop {
                    tick.tick().await;
                    if let Err(e) = gcs.flush() {
                        tracing::error!(error = %e, "periodic log flush failed");
                    }
                }
            }
        };
        // open event streams never finish on their own, so the servers are
        // dropped rather than drained
        let result = tokio::select! {
            r = async { axum::serve(http, app).await } => r.map_err(ServerError::from),
            r = net::serve_protocol(proto, gcs.clone()) => r.map_err(ServerError::from),
            _ = flusher => Ok(()),
            _ = shutdown => Ok(()),
        };
        gcs.flush()?;
        tracing::info!("gcs stopped");
        result
    }
}
