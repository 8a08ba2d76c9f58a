//! HTTP API for playing guess-who against the zero-shot classifier.

pub mod api;
pub mod config;
pub mod error;
pub mod state;
pub mod store;

use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use tower_http::services::ServeDir;

pub use config::{BackendConfig, ConfigError, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use state::{AppState, StartupError};

/// The API routes, plus the static front-end under `/` when a directory is
/// given.
pub fn app(state: Arc<AppState>, static_dir: Option<&std::path::Path>) -> Router {
    let router = api::routes(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Bind, serve until ctrl-c, and sweep expired sessions in the background.
pub async fn serve(config: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = Arc::new(tokio::task::spawn_blocking({
        let config = config.clone();
        move || AppState::from_config(&config)
    })
    .await??);

    let sweeper = Arc::clone(&state);
    let every = (config.session_ttl() / 4).clamp(Duration::from_secs(1), Duration::from_secs(300));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let dropped = sweeper.store.sweep();
            if dropped > 0 {
                tracing::info!(dropped, "expired sessions removed");
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app(state, config.static_dir.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
