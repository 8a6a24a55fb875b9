use std::sync::Arc;

use angel_core::session::{CloseResponse, CreateResponse, TurnResponse, View, WATERMARK};
use angel_core::trace::{verify_trace, Trace};
use angel_core::{CellCoord, Rat};
use angel_service::{router, Sessions};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let code = resp.status();
    (code, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_of<T: serde::de::DeserializeOwned>(app: &Router, method: Method, uri: &str, body: Option<Value>) -> T {
    let (code, bytes) = call(app, method, uri, body).await;
    assert_eq!(code, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    serde_json::from_slice(&bytes).unwrap()
}

fn app() -> Router {
    router(Arc::new(Sessions::default()))
}

#[tokio::test]
async fn create_gives_independent_sessions_at_the_origin() {
    let app = app();
    let a: CreateResponse = json_of(&app, Method::POST, "/sessions", Some(json!({}))).await;
    let b: CreateResponse = json_of(&app, Method::POST, "/sessions", Some(json!({"seed": 4}))).await;
    assert_ne!(a.id, b.id);
    assert_eq!(a.view.status.angel, CellCoord::ORIGIN);
    assert_eq!(a.view.status.total_mass, Rat::ZERO);
    assert!(a.view.colonies.is_empty());
    assert_eq!(a.view.status.watermark, None);

    let toy: CreateResponse = json_of(&app, Method::POST, "/sessions", Some(json!({"mode": "toy"}))).await;
    assert_eq!(toy.view.status.watermark.as_deref(), Some(WATERMARK));

    let (code, body) = call(&app, Method::POST, "/sessions", Some(json!({"params": {"q": 3}}))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY, "{}", String::from_utf8_lossy(&body));
}

#[tokio::test]
async fn devil_turns_move_the_angel_and_bad_replies_change_nothing() {
    let app = app();
    let c: CreateResponse = json_of(&app, Method::POST, "/sessions", Some(json!({}))).await;
    let base = format!("/sessions/{}", c.id);
    let r: TurnResponse = json_of(&app, Method::POST, &format!("{base}/devil-turn"), Some(json!({"dt": 1}))).await;
    assert!(r.mv.is_some());
    assert_ne!(r.status.angel, CellCoord::ORIGIN);

    let (_, before) = call(&app, Method::GET, &format!("{base}/trace"), None).await;
    let dt = r.status.max_dt.unwrap();
    let over = r.status.sigma * Rat::from(dt as i64) * Rat::from(2);
    let body = json!({"dt": dt, "deposits": [[{"x": 5, "y": 5}, over]]});
    let (code, err) = call(&app, Method::POST, &format!("{base}/devil-turn"), Some(body)).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let err: Value = serde_json::from_slice(&err).unwrap();
    assert_eq!(err["kind"], "rejected");
    assert!(err["reason"].as_str().unwrap().contains("budget"));
    let (_, after) = call(&app, Method::GET, &format!("{base}/trace"), None).await;
    assert_eq!(before, after);

    let legal = json!({"dt": dt, "deposits": [[{"x": 5, "y": 5}, r.status.sigma * Rat::from(dt as i64)]]});
    let r: TurnResponse = json_of(&app, Method::POST, &format!("{base}/devil-turn"), Some(legal)).await;
    assert_eq!(r.deposited.len(), 1);

    let v: View = json_of(&app, Method::GET, &format!("{base}/view?x0=0&y0=0&x1=10&y1=10&zoom=0"), None).await;
    assert_eq!(v.colonies.len(), 1);
    assert_eq!(v.colonies[0].c, CellCoord::new(5, 5));
    let v: View = json_of(&app, Method::GET, &format!("{base}/view?zoom=1"), None).await;
    assert_eq!(v.b, 97);
    assert_eq!(v.history.len(), 5);
    let (code, _) = call(&app, Method::GET, &format!("{base}/view?x0=0"), None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);

    let closed: CloseResponse = json_of(&app, Method::DELETE, &base, None).await;
    let trace = Trace::parse(&closed.trace).unwrap();
    assert!(verify_trace(&trace, None).unwrap().is_clean());
    let (code, _) = call(&app, Method::GET, &format!("{base}/trace"), None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let app = app();
    let (code, body) = call(&app, Method::POST, "/sessions/77/devil-turn", Some(json!({"dt": 1}))).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let err: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(err["kind"], "unknown_session");
}

#[tokio::test]
async fn concurrent_sessions_stay_isolated() {
    let app = app();
    let mut ids = Vec::new();
    for seed in 0..4 {
        let c: CreateResponse = json_of(&app, Method::POST, "/sessions", Some(json!({"seed": seed}))).await;
        ids.push(c.id);
    }
    let mut tasks = Vec::new();
    for (k, id) in ids.iter().copied().enumerate() {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            for _ in 0..=k {
                let _: TurnResponse = json_of(&app, Method::POST, &format!("/sessions/{id}/devil-turn"), Some(json!({"dt": 1}))).await;
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    for (k, id) in ids.iter().enumerate() {
        let v: View = json_of(&app, Method::GET, &format!("/sessions/{id}/view"), None).await;
        assert_eq!(v.status.units, k + 1);
    }
}
