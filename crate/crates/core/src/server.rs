//! HTTP front end for the event store.
//!
//! `POST /v1/events` takes an NDJSON body and answers with the accepted
//! record count in decimal. `GET /v1/users/{id}/events` returns the user's
//! log as NDJSON, sorted by time.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

use crate::event::{serialize_event, UserId};
use crate::store::{EventStore, StoreError};

pub fn router(store: Arc<EventStore>) -> Router {
    Router::new().route("/v1/events", post(submit)).route("/v1/users/{id}/events", get(export)).with_state(store)
}

async fn submit(State(store): State<Arc<EventStore>>, body: Bytes) -> Response {
    let result = tokio::task::spawn_blocking(move || store.submit_ndjson(&body)).await;
    match result {
        Ok(Ok(outcome)) => {
            if outcome.skipped > 0 {
                tracing::info!(accepted = outcome.accepted, skipped = outcome.skipped, "batch stored");
            }
            (StatusCode::OK, outcome.accepted.to_string()).into_response()
        }
        Ok(Err(e)) => {
            tracing::error!("submit failed: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn export(State(store): State<Arc<EventStore>>, Path(id): Path<UserId>) -> Response {
    let result = tokio::task::spawn_blocking(move || store.export_user_log(id)).await;
    match result {
        Ok(Ok(records)) => {
            let mut body = String::with_capacity(records.len() * 96);
            for r in &records {
                body.push_str(&serialize_event(r));
                body.push('\n');
            }
            ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
        }
        Ok(Err(StoreError::UnknownUser(u))) => (StatusCode::NOT_FOUND, format!("unknown user {u}")).into_response(),
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Binds `addr` and serves until the process receives Ctrl-C.
pub async fn serve(addr: SocketAddr, store: Arc<EventStore>) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
