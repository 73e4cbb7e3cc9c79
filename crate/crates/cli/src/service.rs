//! HTTP inference service: `GET /healthz`, `POST /api/v1/predict` and static
//! assets at `/`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use axum::body::Bytes;
use fer_core::data::CLASS_NAMES;
use fer_core::nn::Model;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::input::{self, pixels_from_ints};
use crate::predict::predict_pixels;

/// Request bodies above this many bytes get 413.
pub const BODY_LIMIT: usize = 256 * 1024;

#[derive(Debug, Deserialize)]
struct PredictRequest {
    pixels: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub probabilities: BTreeMap<String, f32>,
    pub label: String,
    pub latency_ms: f64,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(ErrorBody { error: message.to_string() })).into_response()
}

fn bad_request(message: impl ToString) -> Response {
    error(StatusCode::BAD_REQUEST, message)
}

#[derive(Clone)]
struct AppState {
    model: Arc<Model>,
}

/// Builds the router. Without a static directory, `/` answers with a short
/// plain-text index instead of the browser demo.
pub fn router(model: Arc<Model>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/api/v1/predict", post(predict))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(AppState { model });
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route(
            "/",
            get(|| async {
                "fer inference service\n\nGET  /healthz\nPOST /api/v1/predict  {\"pixels\": [2304 integers 0..=255]} or multipart PGM\n"
            }),
        ),
    }
}

/// Serves until the future is dropped or the listener fails.
pub async fn serve(listener: TcpListener, model: Arc<Model>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    axum::serve(listener, router(model, static_dir)).await
}

async fn predict(State(state): State<AppState>, request: Request) -> Response {
    let started = Instant::now();
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let pixels = if is_multipart {
        pixels_from_multipart(request, &state).await
    } else {
        pixels_from_json(request, &state).await
    };
    let pixels = match pixels {
        Ok(p) => p,
        Err(response) => return response,
    };
    let model = Arc::clone(&state.model);
    let result = tokio::task::spawn_blocking(move || predict_pixels(&model, &pixels)).await;
    let prediction = match result {
        Ok(Ok(p)) => p,
        Ok(Err(e)) => return error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e),
    };
    let probabilities = CLASS_NAMES
        .iter()
        .zip(prediction.probabilities)
        .map(|(name, p)| (name.to_string(), p))
        .collect();
    Json(PredictResponse {
        probabilities,
        label: prediction.label_name().to_string(),
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    })
    .into_response()
}

async fn pixels_from_json(request: Request, state: &AppState) -> Result<Vec<u8>, Response> {
    let body = Bytes::from_request(request, state)
        .await
        .map_err(IntoResponse::into_response)?;
    let parsed: PredictRequest =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid JSON body: {e}")))?;
    pixels_from_ints(&parsed.pixels).map_err(bad_request)
}

/// Takes the first field of the form and decodes it as an image file.
async fn pixels_from_multipart(request: Request, state: &AppState) -> Result<Vec<u8>, Response> {
    let mut form = Multipart::from_request(request, state)
        .await
        .map_err(IntoResponse::into_response)?;
    let field = form
        .next_field()
        .await
        .map_err(IntoResponse::into_response)?
        .ok_or_else(|| bad_request("multipart body has no fields"))?;
    let bytes = field.bytes().await.map_err(IntoResponse::into_response)?;
    input::decode(&bytes).map_err(bad_request)
}
