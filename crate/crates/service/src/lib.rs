//! HTTP service for running protocol sessions and ingesting sensor streams.
//!
//! | Method | Path | Purpose |
//! |---|---|---|
//! | POST | `/sessions` | create a session |
//! | GET | `/sessions` | list sessions (monitor) |
//! | GET | `/sessions/{id}/state` | current screen |
//! | POST | `/sessions/{id}/step` | consent, continue, answer, timeout |
//! | POST | `/sessions/{id}/sensors` | append a sensor batch |
//! | GET | `/sessions/{id}/stream` | WebSocket: sensor batches as text frames |
//! | POST | `/sessions/{id}/finalize` | seal a session in rest or done |
//! | GET | `/sessions/{id}/report` | per-phase heart-rate CSV |

mod api;
pub mod clock;
pub mod config;
mod error;
mod registry;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;
use tokio::net::TcpListener;

pub use api::router;
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{ConfigError, ServiceConfig, DEFAULT_CONFIG};
pub use error::ApiError;
pub use registry::{
    AnswerValue, AppState, BatchAck, CreateRequest, FinalizeResponse, QuestionView, SensorBatch,
    SessionSummary, SessionView, StepRequest, StepResponse,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("opening store: {0}")]
    Store(#[from] stresslab_core::store::StoreError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    state: AppState,
}

impl Server {
    pub async fn bind(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Server, ServiceError> {
        let addr = format!("{}:{}", config.bind, config.port);
        let state = AppState::open(config, clock)?;
        let listener = TcpListener::bind(&addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })?;
        Ok(Server { listener, state })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
        tracing::info!(addr = %self.listener.local_addr()?, "listening");
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await?;
        tracing::info!("shut down");
        Ok(())
    }
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
