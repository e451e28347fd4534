//! Stateless JSON service over the shared endpoint dispatcher.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use crate::api::{self, ApiError, Endpoint, Limits};

#[derive(Clone)]
pub struct AppState {
    pub limits: Limits,
    permits: Arc<Semaphore>,
    static_dir: Option<PathBuf>,
}

impl AppState {
    /// `workers` bounds concurrent computations; defaults to the core count.
    pub fn new(limits: Limits, workers: Option<usize>, static_dir: Option<PathBuf>) -> Self {
        let workers = workers
            .or_else(|| std::thread::available_parallelism().ok().map(usize::from))
            .unwrap_or(1)
            .max(1);
        Self {
            limits,
            permits: Arc::new(Semaphore::new(workers)),
            static_dir,
        }
    }
}

fn error_response(endpoint: Endpoint, err: &ApiError) -> Response {
    let status = StatusCode::from_u16(err.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(api::error_body(Some(endpoint), err))).into_response()
}

async fn compute(state: AppState, endpoint: Endpoint, body: Bytes) -> Response {
    let envelope = match api::parse_envelope(&body) {
        Ok(env) => env,
        Err(e) => return error_response(endpoint, &e),
    };
    let Ok(_permit) = state.permits.clone().acquire_owned().await else {
        return error_response(endpoint, &ApiError::resource("service is shutting down"));
    };
    let limits = state.limits;
    let outcome =
        tokio::task::spawn_blocking(move || api::handle(endpoint, &envelope, &limits)).await;
    match outcome {
        Ok(Ok(value)) => Json(value).into_response(),
        Ok(Err(e)) => error_response(endpoint, &e),
        Err(join) => {
            log::error!("{} handler panicked: {join}", endpoint.name());
            let err = ApiError {
                kind: api::ErrorKind::Internal,
                field: None,
                message: "computation failed".into(),
            };
            error_response(endpoint, &err)
        }
    }
}

pub fn router(state: AppState) -> Router {
    let mut app = Router::new().route(
        "/api/health",
        get(|| async { Json(json!({"status": "ok"})) }),
    );
    for endpoint in Endpoint::SERVED {
        let path = format!("/api/{}", endpoint.name());
        app = app.route(
            &path,
            post(move |State(state): State<AppState>, body: Bytes| compute(state, endpoint, body)),
        );
    }
    let static_dir = state.static_dir.clone();
    let app = app.with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
