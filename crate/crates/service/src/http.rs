//! HTTP control endpoints and the WebSocket frame stream.
//!
//! | route                      | method | body / reply                                  |
//! |----------------------------|--------|-----------------------------------------------|
//! | `/codes`                   | GET    | `[CodeInfo]`                                  |
//! | `/codes/{index}/preview.png` | GET  | PNG of the code on the reference heatmap      |
//! | `/session/code`            | POST   | `{"id": ..}` or `{"index": ..}` → `SelectAck` |
//! | `/stats`                   | GET    | `Stats`                                       |
//! | `/ws`                      | GET    | WebSocket, see [`ControlMessage`]             |
//!
//! Errors are `{"error": <message>, "kind": <tag>}` with a 4xx/5xx status.
//! Binary WebSocket messages carry one frame each: a 16-byte
//! [`FrameHeader`](crate::FrameHeader) followed by the encoded image.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::error::ServiceError;
use crate::session::{CodeInfo, SelectAck, SessionHandle, Stats};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::UnknownCode(_) => StatusCode::NOT_FOUND,
            ServiceError::Protocol(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string(), "kind": self.kind() }))).into_response()
    }
}

/// Body of `POST /session/code`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CodeSelector {
    Id { id: String },
    Index { index: u32 },
}

impl CodeSelector {
    fn apply(&self, s: &SessionHandle) -> Result<SelectAck, ServiceError> {
        match self {
            CodeSelector::Id { id } => s.select_id(id),
            CodeSelector::Index { index } => s.select_index(*index),
        }
    }
}

/// Text messages a WebSocket client may send; each gets one JSON reply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlMessage {
    ListCodes,
    SelectCode {
        #[serde(flatten)]
        code: CodeSelector,
    },
    GetStats,
    Subscribe,
    Unsubscribe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlReply {
    Codes { codes: Vec<CodeInfo> },
    Selected(SelectAck),
    Stats(Stats),
    Subscribed { subscribed: bool },
    Error { error: String, code: String },
}

pub fn router(session: SessionHandle) -> Router {
    Router::new()
        .route("/codes", get(list_codes))
        .route("/codes/{index}/preview.png", get(preview))
        .route("/session/code", post(select_code))
        .route("/stats", get(stats))
        .route("/ws", get(ws_upgrade))
        .with_state(session)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    session: SessionHandle,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session)).with_graceful_shutdown(shutdown).await
}

async fn list_codes(State(s): State<SessionHandle>) -> Json<Vec<CodeInfo>> {
    Json(s.codes())
}

async fn preview(State(s): State<SessionHandle>, Path(index): Path<u32>) -> Result<Response, ServiceError> {
    let png = tokio::task::spawn_blocking(move || s.preview_png(index))
        .await
        .map_err(|e| ServiceError::Protocol(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response())
}

async fn select_code(State(s): State<SessionHandle>, body: axum::body::Bytes) -> Result<Json<SelectAck>, ServiceError> {
    let sel: CodeSelector = serde_json::from_slice(&body).map_err(|e| ServiceError::Protocol(e.to_string()))?;
    Ok(Json(sel.apply(&s)?))
}

async fn stats(State(s): State<SessionHandle>) -> Json<Stats> {
    Json(s.stats())
}

async fn ws_upgrade(State(s): State<SessionHandle>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream(socket, s))
}

pub fn handle_control(s: &SessionHandle, msg: &ControlMessage, subscribed: &mut bool) -> ControlReply {
    let err = |e: ServiceError| ControlReply::Error { error: e.to_string(), code: e.kind().into() };
    match msg {
        ControlMessage::ListCodes => ControlReply::Codes { codes: s.codes() },
        ControlMessage::SelectCode { code } => code.apply(s).map_or_else(err, ControlReply::Selected),
        ControlMessage::GetStats => ControlReply::Stats(s.stats()),
        ControlMessage::Subscribe | ControlMessage::Unsubscribe => {
            *subscribed = matches!(msg, ControlMessage::Subscribe);
            ControlReply::Subscribed { subscribed: *subscribed }
        }
    }
}

async fn stream(mut socket: WebSocket, s: SessionHandle) {
    let mut rx = s.subscribe();
    // Frames published before this client connected are not replayed.
    rx.mark_unchanged();
    let mut subscribed = true;
    loop {
        tokio::select! {
            changed = rx.changed() => {
                if changed.is_err() {
                    break;
                }
                let frame = rx.borrow_and_update().clone();
                if let (true, Some(f)) = (subscribed, frame) {
                    if socket.send(Message::Binary(f.message.clone().into())).await.is_err() {
                        break;
                    }
                }
            }
            incoming = socket.recv() => {
                let reply = match incoming {
                    Some(Ok(Message::Text(t))) => match serde_json::from_str::<ControlMessage>(&t) {
                        Ok(m) => handle_control(&s, &m, &mut subscribed),
                        Err(e) => ControlReply::Error { error: e.to_string(), code: "protocol".into() },
                    },
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let text = serde_json::to_string(&reply).expect("replies serialize");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
        }
    }
}
