//! HTTP routes. Every error body is `{"error": <kind>, "detail": <message>}`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use arise_core::reports::ChatMessage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::app::{AppState, ServiceError, SimulateRequest};

/// Header carrying the caller's user id (stand-in for real authentication).
pub const USER_HEADER: &str = "x-arise-user";

pub const NDJSON: &str = "application/x-ndjson";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Unauthorized(_) => StatusCode::FORBIDDEN,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        let body = serde_json::json!({"error": self.kind(), "detail": self.to_string()});
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/chat/webhook", post(chat_webhook))
        .route("/onsite/reports", get(onsite_reports))
        .route("/onsite/pois", get(onsite_pois))
        .route("/offsite/terrain/{use_case}", get(terrain))
        .route("/offsite/simulate", post(simulate))
        .route("/offsite/gallery/{use_case}", get(gallery))
        .route("/artworks/{file}", get(artwork_image))
        .route("/events", post(record_event))
        .route("/profile/{user_id}", get(profile))
        .fallback(|| async { ServiceError::NotFound("no such route".into()) })
        .method_not_allowed_fallback(|| async {
            (
                StatusCode::METHOD_NOT_ALLOWED,
                Json(serde_json::json!({"error": "method_not_allowed", "detail": "method not allowed"})),
            )
        })
        .with_state(state)
}

/// Runs a state operation on the blocking pool.
async fn blocking<T, F>(state: Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

/// A single `ChatMessage` document gets a single `BotReply`. A body of several
/// newline-delimited messages is handled in order and answered line by line.
async fn chat_webhook(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    if let Ok(msg) = serde_json::from_slice::<ChatMessage>(&body) {
        let mut replies = blocking(state, move |s| s.chat(std::slice::from_ref(&msg))).await?;
        return Ok(Json(replies.remove(0)).into_response());
    }
    let text = std::str::from_utf8(&body).map_err(|_| ServiceError::BadRequest("body is not UTF-8".into()))?;
    let mut messages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let msg: ChatMessage = serde_json::from_str(line)
            .map_err(|e| ServiceError::BadRequest(format!("line {}: invalid message: {e}", i + 1)))?;
        messages.push(msg);
    }
    if messages.is_empty() {
        return Err(ServiceError::BadRequest("no messages in body".into()));
    }
    let replies = blocking(state, move |s| s.chat(&messages)).await?;
    let mut out = String::new();
    for r in &replies {
        out.push_str(&serde_json::to_string(r).map_err(|e| ServiceError::Internal(e.to_string()))?);
        out.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, NDJSON)], out).into_response())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Around {
    pub lat: f64,
    pub lon: f64,
    pub radius_m: Option<f64>,
}

fn around(query: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult<Around> {
    let Query(q) = query.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let num = |key: &str, required: bool| -> ApiResult<Option<f64>> {
        match q.get(key) {
            None if required => Err(ServiceError::BadRequest(format!("missing query parameter {key}"))),
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| ServiceError::BadRequest(format!("query parameter {key} is not a number: {v:?}"))),
        }
    };
    Ok(Around {
        lat: num("lat", true)?.unwrap_or_default(),
        lon: num("lon", true)?.unwrap_or_default(),
        radius_m: num("radius_m", false)?,
    })
}

async fn onsite_reports(
    State(state): State<Arc<AppState>>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult<Response> {
    let a = around(query)?;
    let cards = blocking(state, move |s| s.nearby_reports(a.lat, a.lon, a.radius_m)).await?;
    Ok(Json(cards).into_response())
}

async fn onsite_pois(
    State(state): State<Arc<AppState>>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult<Response> {
    let a = around(query)?;
    let pois = blocking(state, move |s| s.nearby_pois(a.lat, a.lon, a.radius_m)).await?;
    Ok(Json(pois).into_response())
}

async fn terrain(State(state): State<Arc<AppState>>, Path(use_case): Path<String>) -> ApiResult<Response> {
    let payload = blocking(state, move |s| s.terrain(&use_case)).await?;
    Ok(Json(payload).into_response())
}

async fn simulate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: SimulateRequest = parse_json(&body)?;
    let result = blocking(state, move |s| s.simulate(&req)).await?;
    Ok(Json(result).into_response())
}

async fn gallery(State(state): State<Arc<AppState>>, Path(use_case): Path<String>) -> ApiResult<Response> {
    let entries = blocking(state, move |s| s.gallery(&use_case)).await?;
    Ok(Json(entries).into_response())
}

async fn artwork_image(State(state): State<Arc<AppState>>, Path(file): Path<String>) -> ApiResult<Response> {
    let id = file
        .strip_suffix(".png")
        .filter(|id| !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-'))
        .ok_or_else(|| ServiceError::NotFound(format!("no artwork image {file:?}")))?
        .to_string();
    let png = blocking(state, move |s| s.artwork_image(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRequest {
    pub user_id: String,
    pub event_type: String,
}

async fn record_event(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let req: EventRequest = parse_json(&body)?;
    let claimed = match headers.get(USER_HEADER) {
        None => None,
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ServiceError::BadRequest(format!("{USER_HEADER} is not valid text")))?
                .to_string(),
        ),
    };
    let profile = blocking(state, move |s| s.record_event(&req.user_id, &req.event_type, claimed.as_deref())).await?;
    Ok(Json(profile).into_response())
}

async fn profile(State(state): State<Arc<AppState>>, Path(user_id): Path<String>) -> ApiResult<Response> {
    let p = blocking(state, move |s| s.profile(&user_id)).await?;
    Ok(Json(p).into_response())
}
