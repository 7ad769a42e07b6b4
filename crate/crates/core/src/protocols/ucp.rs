//! UCP checkout sessions with an idempotent create (`/ucp/sessions`).
//!
//! Every POST must carry `Idempotency-Key`, `Request-Id` and `UCP-Agent`.
//! `POST /ucp/sessions/{id}/cancel` is an extension.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use chrono::{DateTime, Duration, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{caller_for, ProtocolDescriptor, ProtocolHandler};
use crate::gateway::clock::SharedClock;
use crate::gateway::error::ApiError;
use crate::gateway::Principal;
use crate::money::{Money, MoneyError};

pub const PROTOCOL_VERSION: &str = "0.1.0";
pub const REQUIRED_HEADERS: [&str; 3] = ["Idempotency-Key", "Request-Id", "UCP-Agent"];
pub const REPLAY_HEADER: &str = "idempotent-replayed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Completed,
    Canceled,
}

impl SessionStatus {
    pub fn is_terminal(self) -> bool {
        self != SessionStatus::Open
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineItem {
    pub name: String,
    pub quantity: u32,
    pub unit_price: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLine {
    pub name: String,
    pub quantity: u32,
    pub unit_price: Money,
    pub line_total: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckoutSession {
    pub id: String,
    pub caller_id: String,
    pub items: Vec<SessionLine>,
    pub total: Money,
    pub currency: String,
    pub status: SessionStatus,
    pub idempotency_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_key: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UcpError {
    #[error("invalid session: {0}")]
    Invalid(String),
    #[error("session not found: {0}")]
    NotFound(String),
    #[error("idempotency key {0:?} was already used with a different request body")]
    Conflict(String),
    #[error("session {id} is {from:?}; cannot move to {to:?}")]
    Illegal { id: String, from: SessionStatus, to: SessionStatus },
    #[error("stored totals disagree with line items")]
    TotalMismatch,
    #[error(transparent)]
    Money(#[from] MoneyError),
}

impl From<UcpError> for ApiError {
    fn from(e: UcpError) -> Self {
        match e {
            UcpError::Invalid(_) | UcpError::Money(_) => ApiError::bad_request(e.to_string()),
            UcpError::NotFound(_) => ApiError::not_found(e.to_string()),
            UcpError::Conflict(_) | UcpError::Illegal { .. } => ApiError::conflict(e.to_string()),
            UcpError::TotalMismatch => ApiError::internal(),
        }
    }
}

/// Σ quantity·unit_price in exact minor units.
pub fn total_of(items: &[SessionLine]) -> Result<Money, MoneyError> {
    items.iter().try_fold(Money::ZERO, |acc, l| acc.checked_add(l.unit_price.checked_mul(l.quantity)?))
}

pub fn price_lines(items: &[LineItem]) -> Result<Vec<SessionLine>, UcpError> {
    if items.is_empty() {
        return Err(UcpError::Invalid("at least one line item is required".into()));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            if it.name.trim().is_empty() {
                return Err(UcpError::Invalid(format!("item {i}: name must not be empty")));
            }
            if it.quantity == 0 {
                return Err(UcpError::Invalid(format!("item {i}: quantity must be at least 1")));
            }
            if it.unit_price.is_negative() {
                return Err(UcpError::Invalid(format!("item {i}: unit_price must not be negative")));
            }
            Ok(SessionLine {
                name: it.name.clone(),
                quantity: it.quantity,
                unit_price: it.unit_price,
                line_total: it.unit_price.checked_mul(it.quantity)?,
            })
        })
        .collect()
}

/// SHA-256 over the canonical (key-sorted, compact) JSON text.
pub fn body_digest(body: &Value) -> String {
    hex::encode(Sha256::digest(body.to_string().as_bytes()))
}

struct IdemEntry {
    digest: String,
    session_id: String,
    expires_at: DateTime<Utc>,
}

pub struct NewSession<'a> {
    pub caller_id: &'a str,
    pub idempotency_key: &'a str,
    pub digest: &'a str,
    pub items: &'a [LineItem],
    pub currency: &'a str,
}

pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<CheckoutSession>>>>,
    idempotency: Mutex<HashMap<String, IdemEntry>>,
    clock: SharedClock,
    ttl: Duration,
}

impl SessionStore {
    pub fn new(clock: SharedClock, ttl: Duration) -> Self {
        Self { sessions: RwLock::new(HashMap::new()), idempotency: Mutex::new(HashMap::new()), clock, ttl }
    }

    /// Returns the session and whether it is a replay of an earlier create.
    pub fn create(&self, req: NewSession<'_>) -> Result<(CheckoutSession, bool), UcpError> {
        let lines = price_lines(req.items)?;
        let total = total_of(&lines)?;
        let now = self.clock.now();
        // the cache lock spans lookup, session insert and cache insert
        let mut cache = self.idempotency.lock();
        cache.retain(|_, e| e.expires_at > now);
        if let Some(e) = cache.get(req.idempotency_key) {
            if e.digest != req.digest {
                return Err(UcpError::Conflict(req.idempotency_key.to_string()));
            }
            return Ok((self.get(&e.session_id)?, true));
        }
        let session = CheckoutSession {
            id: format!("cs_{}", uuid::Uuid::new_v4().simple()),
            caller_id: req.caller_id.to_string(),
            items: lines,
            total,
            currency: req.currency.to_string(),
            status: SessionStatus::Open,
            idempotency_key: req.idempotency_key.to_string(),
            completion_key: None,
            created_at: now,
            updated_at: now,
        };
        self.sessions.write().insert(session.id.clone(), Arc::new(Mutex::new(session.clone())));
        cache.insert(
            req.idempotency_key.to_string(),
            IdemEntry { digest: req.digest.to_string(), session_id: session.id.clone(), expires_at: now + self.ttl },
        );
        Ok((session, false))
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<CheckoutSession>>, UcpError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| UcpError::NotFound(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<CheckoutSession, UcpError> {
        Ok(self.slot(id)?.lock().clone())
    }

    /// Open → completed. Repeating with the completing key replays.
    pub fn complete(&self, id: &str, key: &str) -> Result<(CheckoutSession, bool), UcpError> {
        let slot = self.slot(id)?;
        let mut s = slot.lock();
        match s.status {
            SessionStatus::Open => {}
            SessionStatus::Completed if s.completion_key.as_deref() == Some(key) => return Ok((s.clone(), true)),
            from => return Err(UcpError::Illegal { id: id.to_string(), from, to: SessionStatus::Completed }),
        }
        if total_of(&s.items)? != s.total {
            return Err(UcpError::TotalMismatch);
        }
        s.status = SessionStatus::Completed;
        s.completion_key = Some(key.to_string());
        s.updated_at = self.clock.now();
        Ok((s.clone(), false))
    }

    pub fn cancel(&self, id: &str) -> Result<CheckoutSession, UcpError> {
        let slot = self.slot(id)?;
        let mut s = slot.lock();
        if s.status != SessionStatus::Open {
            return Err(UcpError::Illegal { id: id.to_string(), from: s.status, to: SessionStatus::Canceled });
        }
        s.status = SessionStatus::Canceled;
        s.updated_at = self.clock.now();
        Ok(s.clone())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.read().is_empty()
    }
}

#[derive(Clone)]
pub struct UcpHandler {
    store: Arc<SessionStore>,
}

impl UcpHandler {
    pub fn new(clock: SharedClock, ttl: Duration) -> Self {
        Self { store: Arc::new(SessionStore::new(clock, ttl)) }
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }
}

impl ProtocolHandler for UcpHandler {
    fn descriptor(&self) -> ProtocolDescriptor {
        ProtocolDescriptor {
            name: "ucp",
            version: PROTOCOL_VERSION,
            endpoints: vec![
                "POST /ucp/sessions".into(),
                "GET /ucp/sessions/{id}".into(),
                "POST /ucp/sessions/{id}/complete".into(),
                "POST /ucp/sessions/{id}/cancel".into(),
            ],
        }
    }

    fn routes(&self) -> Router {
        Router::new()
            .route("/ucp/sessions", post(create))
            .route("/ucp/sessions/{id}", get(fetch))
            .route("/ucp/sessions/{id}/complete", post(complete))
            .route("/ucp/sessions/{id}/cancel", post(cancel))
            .with_state(self.clone())
    }
}

/// The idempotency key, once all required headers are present and non-empty.
pub fn required_headers(headers: &HeaderMap) -> Result<String, ApiError> {
    let value = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::trim).filter(|v| !v.is_empty());
    let missing: Vec<&str> = REQUIRED_HEADERS.into_iter().filter(|h| value(h).is_none()).collect();
    if !missing.is_empty() {
        return Err(ApiError::bad_request(format!("missing required headers: {}", missing.join(", "))));
    }
    Ok(value(REQUIRED_HEADERS[0]).unwrap_or_default().to_string())
}

fn session_response(session: CheckoutSession, created: bool, replay: bool) -> Response {
    let status = if created && !replay { StatusCode::CREATED } else { StatusCode::OK };
    let mut res = (status, Json(session)).into_response();
    if replay {
        res.headers_mut().insert(REPLAY_HEADER, HeaderValue::from_static("true"));
    }
    res
}

#[derive(Debug, Deserialize)]
struct CreateBody {
    #[serde(default)]
    caller_id: Option<String>,
    items: Vec<LineItem>,
    #[serde(default = "usd")]
    currency: String,
}

fn usd() -> String {
    "USD".into()
}

async fn create(
    State(h): State<UcpHandler>,
    principal: Option<Extension<Principal>>,
    headers: HeaderMap,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let key = required_headers(&headers)?;
    let Json(raw) = body?;
    let parsed: CreateBody =
        serde_json::from_value(raw.clone()).map_err(|e| ApiError::bad_request(format!("invalid session body: {e}")))?;
    let caller = caller_for(parsed.caller_id.as_deref(), principal.as_ref().map(|Extension(p)| p));
    let digest = body_digest(&raw);
    let (session, replay) = h.store.create(NewSession {
        caller_id: &caller,
        idempotency_key: &key,
        digest: &digest,
        items: &parsed.items,
        currency: &parsed.currency,
    })?;
    Ok(session_response(session, true, replay))
}

async fn fetch(State(h): State<UcpHandler>, Path(id): Path<String>) -> Result<Json<CheckoutSession>, ApiError> {
    Ok(Json(h.store.get(&id)?))
}

async fn complete(
    State(h): State<UcpHandler>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let key = required_headers(&headers)?;
    let (session, replay) = h.store.complete(&id, &key)?;
    Ok(session_response(session, false, replay))
}

async fn cancel(State(h): State<UcpHandler>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    required_headers(&headers)?;
    Ok(session_response(h.store.cancel(&id)?, false, false))
}
