use std::net::SocketAddr;

use watercare_gcs::{Server, ServerConfig};

use crate::args::GcsArgs;
use crate::error::{io_error, CliError};

pub fn run(args: GcsArgs) -> Result<(), CliError> {
    let config = ServerConfig {
        http_addr: SocketAddr::new(args.bind, args.http_port),
        proto_addr: SocketAddr::new(args.bind, args.proto_port),
        log_path: (!args.no_log).then(|| args.log.clone()),
        token: args.token.filter(|t| !t.is_empty()),
        ui_dir: args.ui_dir,
        ..ServerConfig::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| io_error("starting runtime", e))?;
    rt.block_on(async move {
        // registered before the ready line so an early signal is not lost
        let shutdown = shutdown_signal()?;
        let server = Server::bind(config).await?;
        let http = server.http_addr().map_err(|e| io_error("http listener", e))?;
        let proto = server.proto_addr().map_err(|e| io_error("protocol listener", e))?;
        // parsed by scripts that start the service on ephemeral ports
        eprintln!("watercare gcs: http {http} protocol {proto}");
        server.run(shutdown).await?;
        Ok(())
    })
}

#[cfg(unix)]
fn shutdown_signal() -> Result<impl std::future::Future<Output = ()>, CliError> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut int = signal(SignalKind::interrupt()).map_err(|e| io_error("installing SIGINT handler", e))?;
    let mut term = signal(SignalKind::terminate()).map_err(|e| io_error("installing SIGTERM handler", e))?;
    Ok(async move {
        tokio::select! {
            _ = int.recv() => {}
            _ = term.recv() => {}
        }
    })
}

#[cfg(not(unix))]
fn shutdown_signal() -> Result<impl std::future::Future<Output = ()>, CliError> {
    Ok(async {
        let _ = tokio::signal::ctrl_c().await;
    })
}
