//! The session protocol over HTTP with JSON bodies.
//!
//! | operation      | route                              |
//! |----------------|------------------------------------|
//! | create-session | `POST /sessions`                   |
//! | devil-turn     | `POST /sessions/{id}/devil-turn`   |
//! | get-view       | `GET /sessions/{id}/view?x0&y0&x1&y1&zoom` |
//! | export-trace   | `GET /sessions/{id}/trace`         |
//! | close-session  | `DELETE /sessions/{id}`            |
//!
//! Errors are `{"kind": ..., "reason": ...}` bodies. Requests on one session
//! run one at a time; sessions are independent of each other.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use angel_core::session::{CreateRequest, CreateResponse, DevilTurnRequest, Session, SessionError, ViewRequest};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;

/// Side of the default viewport, in cells.
pub const DEFAULT_VIEW: i64 = 64;

type Shared = Arc<tokio::sync::Mutex<Session>>;

#[derive(Default)]
pub struct Sessions {
    map: Mutex<HashMap<u64, Shared>>,
    next: AtomicU64,
}

impl Sessions {
    fn get(&self, id: u64) -> Result<Shared, ApiError> {
        self.map.lock().unwrap().get(&id).cloned().ok_or(ApiError(SessionError::UnknownSession(id)))
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct ApiError(pub SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = match self.0 {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::Rejected(_) | SessionError::NoLanding => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Over => StatusCode::CONFLICT,
            SessionError::BadParams(_) | SessionError::Viewport(_) | SessionError::Trace(_) => StatusCode::BAD_REQUEST,
        };
        (code, Json(self.0)).into_response()
    }
}

/// Run CPU-bound session work off the async workers while holding the
/// session's lock.
async fn with_session<T: Send + 'static>(
    s: Shared,
    f: impl FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    let mut guard = s.lock_owned().await;
    tokio::task::spawn_blocking(move || f(&mut guard)).await.expect("session task panicked").map_err(ApiError)
}

async fn create(State(st): State<Arc<Sessions>>, Json(req): Json<CreateRequest>) -> Result<Json<CreateResponse>, ApiError> {
    let id = st.next.fetch_add(1, Ordering::Relaxed) + 1;
    let (session, view) = tokio::task::spawn_blocking(move || {
        let s = Session::create(id, &req)?;
        let view = s.view(&ViewRequest::around(s.status().angel, DEFAULT_VIEW))?;
        Ok::<_, SessionError>((s, view))
    })
    .await
    .expect("session task panicked")?;
    st.map.lock().unwrap().insert(id, Arc::new(tokio::sync::Mutex::new(session)));
    tracing::info!(id, "session created");
    Ok(Json(CreateResponse { id, view }))
}

async fn devil_turn(
    State(st): State<Arc<Sessions>>,
    Path(id): Path<u64>,
    Json(req): Json<DevilTurnRequest>,
) -> Result<Response, ApiError> {
    let s = st.get(id)?;
    let r = with_session(s, move |s| s.devil_turn(&req)).await?;
    Ok(Json(r).into_response())
}

#[derive(Debug, Deserialize)]
struct ViewQuery {
    x0: Option<i64>,
    y0: Option<i64>,
    x1: Option<i64>,
    y1: Option<i64>,
    #[serde(default)]
    zoom: u32,
}

async fn view(State(st): State<Arc<Sessions>>, Path(id): Path<u64>, Query(q): Query<ViewQuery>) -> Result<Response, ApiError> {
    let s = st.get(id)?;
    let r = with_session(s, move |s| {
        let req = match (q.x0, q.y0, q.x1, q.y1) {
            (Some(x0), Some(y0), Some(x1), Some(y1)) => ViewRequest { x0, y0, x1, y1, zoom: q.zoom },
            (None, None, None, None) => ViewRequest { zoom: q.zoom, ..ViewRequest::around(s.status().angel, DEFAULT_VIEW) },
            _ => return Err(SessionError::Viewport("give all of x0, y0, x1, y1 or none".into())),
        };
        s.view(&req)
    })
    .await?;
    Ok(Json(r).into_response())
}

async fn export(State(st): State<Arc<Sessions>>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let s = st.get(id)?;
    let text = with_session(s, |s| Ok(s.export_trace())).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn close(State(st): State<Arc<Sessions>>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let s = st.map.lock().unwrap().remove(&id).ok_or(ApiError(SessionError::UnknownSession(id)))?;
    let r = with_session(s, |s| Ok(s.close())).await?;
    tracing::info!(id, "session closed");
    Ok(Json(r).into_response())
}

pub fn router(state: Arc<Sessions>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", axum::routing::delete(close))
        .route("/sessions/{id}/devil-turn", post(devil_turn))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/trace", get(export))
        .with_state(state)
}

/// Serve sessions on `listener` until the process stops.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(Sessions::default()))).await
}
