use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::error::ApiError;
use crate::registry::{AppState, CreateRequest, SensorBatch, StepRequest};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/sensors", post(sensors))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/report", get(report))
        .with_state(state)
}

async fn create(
    State(app): State<AppState>,
    body: Option<Json<CreateRequest>>,
) -> Result<Response, ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let view = app.create_session(req).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list(State(app): State<AppState>) -> Response {
    Json(app.list().await).into_response()
}

async fn session_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(app.state(&id).await?).into_response())
}

async fn step(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<StepRequest>,
) -> Result<Response, ApiError> {
    Ok(Json(app.step(&id, req).await?).into_response())
}

async fn sensors(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(batch): Json<SensorBatch>,
) -> Result<Response, ApiError> {
    Ok(Json(app.ingest(&id, batch).await?).into_response())
}

async fn finalize(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(app.finalize(&id).await?).into_response())
}

async fn report(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let csv = app.report(&id).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    // fail the upgrade for unknown sessions
    app.state(&id).await?;
    Ok(ws.on_upgrade(move |socket| sensor_stream(app, id, socket)))
}

/// One JSON sensor batch per text frame; each is answered with an ack or an
/// error object.
async fn sensor_stream(app: AppState, id: String, mut socket: WebSocket) {
    while let Some(Ok(msg)) = socket.recv().await {
        let reply = match msg {
            Message::Text(text) => match serde_json::from_str::<SensorBatch>(text.as_str()) {
                Ok(batch) => match app.ingest(&id, batch).await {
                    Ok(ack) => {
                        let mut v = serde_json::to_value(ack).expect("ack serialises");
                        v["ok"] = true.into();
                        v
                    }
                    Err(e) => error_frame(&e),
                },
                Err(e) => error_frame(&ApiError::bad_request("batch_rejected", e.to_string())),
            },
            Message::Binary(_) => {
                error_frame(&ApiError::bad_request("batch_rejected", "binary frames are not accepted"))
            }
            Message::Close(_) => break,
            _ => continue,
        };
        if socket.send(Message::Text(reply.to_string().into())).await.is_err() {
            break;
        }
    }
}

fn error_frame(e: &ApiError) -> serde_json::Value {
    let mut v = e.body_json();
    v["ok"] = false.into();
    v
}
