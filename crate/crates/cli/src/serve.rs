//! HTTP front end for [`RankService`].
//!
//! `GET /healthz` answers 503 until the artifacts are loaded and `200 ok`
//! afterwards. `POST /rank` takes a JSON rank request. A failed load stops
//! the process with a non-zero exit code.

use std::future::IntoFuture;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use skillrank_core::service::RankService;

use crate::{load_service, ServeArgs};

#[derive(Debug, Default)]
pub struct AppState {
    service: OnceLock<RankService>,
}

impl AppState {
    pub fn loading() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn ready(service: RankService) -> Arc<Self> {
        let state = Self::default();
        let _ = state.service.set(service);
        Arc::new(state)
    }

    /// Publishes the loaded service. Later calls are ignored.
    pub fn set(&self, service: RankService) {
        let _ = self.service.set(service);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/rank", post(rank))
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.service.get() {
        Some(_) => (StatusCode::OK, "ok").into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, "loading").into_response(),
    }
}

async fn rank(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let Some(service) = state.service.get() else {
        return json(
            StatusCode::SERVICE_UNAVAILABLE,
            "{\"error\":\"loading\",\"message\":\"model is still loading\"}".to_string(),
        );
    };
    let (status, body) = service.handle_rank_json(&body);
    json(StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), body)
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start async runtime")?;
    runtime.block_on(serve_async(args))
}

async fn serve_async(args: &ServeArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("invalid listen address {}:{}", args.host, args.port))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot bind {addr}"))?;
    eprintln!("listening on {}", listener.local_addr()?);

    let state = AppState::loading();
    let server = tokio::spawn(axum::serve(listener, router(state.clone())).into_future());

    let model = args.model.clone();
    let service = tokio::task::spawn_blocking(move || load_service(&model))
        .await
        .context("loader task panicked")?;
    match service {
        Ok(service) => {
            state.set(service);
            eprintln!("model loaded");
        }
        Err(e) => {
            server.abort();
            return Err(e.context("startup failed"));
        }
    }
    server.await.context("server task failed")??;
    Ok(())
}
