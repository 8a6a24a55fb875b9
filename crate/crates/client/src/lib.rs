//! Client for the session service. Each method is one protocol operation;
//! protocol errors come back as the service's [`SessionError`].

use angel_core::session::{
    CloseResponse, CreateRequest, CreateResponse, DevilTurnRequest, SessionError, TurnResponse, View, ViewRequest,
};
use reqwest::{Method, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Protocol(#[from] SessionError),
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response {status}: {body}")]
    Unexpected { status: u16, body: String },
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, such as `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Client {
        Client { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    async fn send(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<Response, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body = resp.text().await?;
        match serde_json::from_str::<SessionError>(&body) {
            Ok(e) => Err(ClientError::Protocol(e)),
            Err(_) => Err(ClientError::Unexpected { status, body }),
        }
    }

    async fn json<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<T, ClientError> {
        Ok(self.send(method, path, body).await?.json().await?)
    }

    pub async fn create_session(&self, req: &CreateRequest) -> Result<CreateResponse, ClientError> {
        self.json(Method::POST, "/sessions", Some(req)).await
    }

    pub async fn devil_turn(&self, id: u64, req: &DevilTurnRequest) -> Result<TurnResponse, ClientError> {
        self.json(Method::POST, &format!("/sessions/{id}/devil-turn"), Some(req)).await
    }

    /// The view around the angel when `req` is `None`.
    pub async fn get_view(&self, id: u64, req: Option<&ViewRequest>) -> Result<View, ClientError> {
        let path = match req {
            Some(v) => format!("/sessions/{id}/view?x0={}&y0={}&x1={}&y1={}&zoom={}", v.x0, v.y0, v.x1, v.y1, v.zoom),
            None => format!("/sessions/{id}/view"),
        };
        self.json(Method::GET, &path, None::<&()>).await
    }

    pub async fn export_trace(&self, id: u64) -> Result<String, ClientError> {
        Ok(self.send(Method::GET, &format!("/sessions/{id}/trace"), None::<&()>).await?.text().await?)
    }

    pub async fn close_session(&self, id: u64) -> Result<CloseResponse, ClientError> {
        self.json(Method::DELETE, &format!("/sessions/{id}"), None::<&()>).await
    }
}
