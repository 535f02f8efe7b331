//! Terminal and HTTP entry points for the studymate engine.

pub mod api;
pub mod app;

use std::net::SocketAddr;
use std::sync::Arc;

use studymate::Engine;

/// Serves the API on `addr` until `shutdown` resolves.
pub async fn serve(
    engine: Arc<Engine>,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if !addr.ip().is_loopback() {
        tracing::warn!(%addr, "API has no authentication and is not bound to loopback");
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "API listening");
    axum::serve(listener, api::router(engine))
        .with_graceful_shutdown(shutdown)
        .await
}
