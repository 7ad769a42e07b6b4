//! AP2 payments: intent → mandate → receipt with a per-intent audit trail.
//!
//! Execution is simulated; `X-AP2-Simulate: fail` forces a rail failure.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use chrono::{DateTime, Duration, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{caller_for, ProtocolDescriptor, ProtocolHandler};
use crate::gateway::clock::SharedClock;
use crate::gateway::error::ApiError;
use crate::gateway::Principal;
use crate::money::Money;

pub const PROTOCOL_VERSION: &str = "0.1.0";
pub const SIMULATE_HEADER: &str = "x-ap2-simulate";
pub const SYSTEM_ACTOR: &str = "system";
pub const DEFAULT_INTENT_TTL_SECS: i64 = 3600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub id: String,
    pub caller_id: String,
    pub description: String,
    pub max_amount: Money,
    pub currency: String,
    pub expires_at: DateTime<Utc>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MandateStatus {
    Pending,
    Approved,
    Declined,
    Executed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mandate {
    pub id: String,
    pub intent_id: String,
    pub amount: Money,
    pub method: String,
    pub status: MandateStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receipt_id: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub id: String,
    pub mandate_id: String,
    pub amount: Money,
    pub executed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    IntentCreated,
    MandateCreated,
    MandateApproved,
    MandateDeclined,
    ExecutionFailed,
    MandateExecuted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// 1-based and gap-free within an intent.
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub kind: AuditKind,
    pub payload: Value,
    pub payload_digest: String,
}

pub fn digest(payload: &Value) -> String {
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Ap2Error {
    #[error("{0}")]
    Invalid(String),
    #[error("intent not found: {0}")]
    IntentNotFound(String),
    #[error("mandate not found: {0}")]
    MandateNotFound(String),
    #[error("intent {0} has expired")]
    Expired(String),
    #[error("amount {amount} exceeds the intent maximum {max}")]
    OverMax { amount: Money, max: Money },
    #[error("mandate {id} is {from:?}; cannot {action}")]
    Illegal { id: String, from: MandateStatus, action: &'static str },
    #[error("payment execution failed for mandate {0}")]
    ExecutionFailed(String),
}

impl From<Ap2Error> for ApiError {
    fn from(e: Ap2Error) -> Self {
        match e {
            Ap2Error::Invalid(_) => ApiError::bad_request(e.to_string()),
            Ap2Error::IntentNotFound(_) | Ap2Error::MandateNotFound(_) => ApiError::not_found(e.to_string()),
            Ap2Error::Expired(_) | Ap2Error::OverMax { .. } => ApiError::unprocessable(e.to_string()),
            Ap2Error::Illegal { .. } => ApiError::conflict(e.to_string()),
            Ap2Error::ExecutionFailed(_) => ApiError::new(StatusCode::BAD_GATEWAY, "payment_failed", e.to_string()),
        }
    }
}

/// State derivable for one intent; what both the store and the replay
/// reducer produce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentState {
    pub intent: Intent,
    pub mandates: BTreeMap<String, Mandate>,
    pub receipts: BTreeMap<String, Receipt>,
}

/// Rebuilds intent state from its audit trail alone.
pub fn replay(entries: &[AuditEntry]) -> Result<IntentState, String> {
    let mut state: Option<IntentState> = None;
    for (i, e) in entries.iter().enumerate() {
        let at = |why: &str| format!("entry {}: {why}", e.seq);
        if e.seq != i as u64 + 1 {
            return Err(at("sequence gap"));
        }
        if i > 0 && e.timestamp < entries[i - 1].timestamp {
            return Err(at("timestamp goes backwards"));
        }
        if digest(&e.payload) != e.payload_digest {
            return Err(at("payload digest mismatch"));
        }
        if e.kind == AuditKind::IntentCreated {
            if state.is_some() {
                return Err(at("intent created twice"));
            }
            let intent: Intent = serde_json::from_value(e.payload.clone()).map_err(|x| at(&x.to_string()))?;
            state = Some(IntentState { intent, mandates: BTreeMap::new(), receipts: BTreeMap::new() });
            continue;
        }
        let s = state.as_mut().ok_or_else(|| at("event before intent creation"))?;
        if e.kind == AuditKind::MandateCreated {
            let m: Mandate = serde_json::from_value(e.payload.clone()).map_err(|x| at(&x.to_string()))?;
            if m.status != MandateStatus::Pending || m.intent_id != s.intent.id || m.amount > s.intent.max_amount {
                return Err(at("inconsistent mandate creation"));
            }
            if e.timestamp >= s.intent.expires_at {
                return Err(at("mandate created after expiry"));
            }
            if s.mandates.insert(m.id.clone(), m).is_some() {
                return Err(at("mandate created twice"));
            }
            continue;
        }
        let id = e.payload.get("mandate_id").and_then(Value::as_str).ok_or_else(|| at("missing mandate_id"))?;
        let m = s.mandates.get_mut(id).ok_or_else(|| at("unknown mandate"))?;
        let (from, to) = match e.kind {
            AuditKind::MandateApproved => (MandateStatus::Pending, MandateStatus::Approved),
            AuditKind::MandateDeclined => (MandateStatus::Pending, MandateStatus::Declined),
            AuditKind::ExecutionFailed => (MandateStatus::Approved, MandateStatus::Approved),
            AuditKind::MandateExecuted => (MandateStatus::Approved, MandateStatus::Executed),
            AuditKind::IntentCreated | AuditKind::MandateCreated => unreachable!("handled above"),
        };
        if m.status != from {
            return Err(at("illegal transition"));
        }
        if e.kind == AuditKind::ExecutionFailed {
            continue;
        }
        m.status = to;
        m.updated_at = e.timestamp;
        if e.kind == AuditKind::MandateExecuted {
            let r: Receipt = serde_json::from_value(e.payload.get("receipt").cloned().unwrap_or_default())
                .map_err(|x| at(&x.to_string()))?;
            if r.mandate_id != m.id || r.amount != m.amount {
                return Err(at("receipt does not match mandate"));
            }
            m.receipt_id = Some(r.id.clone());
            if s.receipts.insert(r.mandate_id.clone(), r).is_some() {
                return Err(at("second receipt"));
            }
        }
    }
    state.ok_or_else(|| "empty audit trail".into())
}

struct IntentRecord {
    state: IntentState,
    audit: Vec<AuditEntry>,
}

impl IntentRecord {
    fn append(&mut self, at: DateTime<Utc>, actor: &str, kind: AuditKind, payload: Value) {
        self.audit.push(AuditEntry {
            seq: self.audit.len() as u64 + 1,
            timestamp: at,
            actor: actor.to_string(),
            kind,
            payload_digest: digest(&payload),
            payload,
        });
    }
}

#[derive(Default)]
struct Ledger {
    intents: HashMap<String, IntentRecord>,
    mandate_intent: HashMap<String, String>,
}

impl Ledger {
    fn mandate_mut(&mut self, id: &str) -> Result<(&mut IntentRecord, String), Ap2Error> {
        let intent_id =
            self.mandate_intent.get(id).cloned().ok_or_else(|| Ap2Error::MandateNotFound(id.to_string()))?;
        let rec = self.intents.get_mut(&intent_id).ok_or_else(|| Ap2Error::IntentNotFound(intent_id.clone()))?;
        Ok((rec, intent_id))
    }
}

pub struct NewIntent<'a> {
    pub caller_id: &'a str,
    pub description: &'a str,
    pub max_amount: Money,
    pub currency: &'a str,
    pub expires_at: Option<DateTime<Utc>>,
}

/// All AP2 state behind one lock, so a state change and its audit entry
/// land together.
pub struct PaymentStore {
    ledger: Mutex<Ledger>,
    clock: SharedClock,
    threshold: Money,
}

impl PaymentStore {
    pub fn new(clock: SharedClock, auto_approve_threshold: Money) -> Self {
        Self { ledger: Mutex::new(Ledger::default()), clock, threshold: auto_approve_threshold }
    }

    pub fn threshold(&self) -> Money {
        self.threshold
    }

    pub fn create_intent(&self, req: NewIntent<'_>) -> Result<Intent, Ap2Error> {
        let now = self.clock.now();
        if req.max_amount.is_negative() {
            return Err(Ap2Error::Invalid("max_amount must not be negative".into()));
        }
        let expires_at = req.expires_at.unwrap_or(now + Duration::seconds(DEFAULT_INTENT_TTL_SECS));
        if expires_at <= now {
            return Err(Ap2Error::Invalid("expires_at must be in the future".into()));
        }
        let intent = Intent {
            id: format!("int_{}", uuid::Uuid::new_v4().simple()),
            caller_id: req.caller_id.to_string(),
            description: req.description.to_string(),
            max_amount: req.max_amount,
            currency: req.currency.to_string(),
            expires_at,
            created_at: now,
        };
        let mut rec = IntentRecord {
            state: IntentState { intent: intent.clone(), mandates: BTreeMap::new(), receipts: BTreeMap::new() },
            audit: Vec::new(),
        };
        rec.append(now, req.caller_id, AuditKind::IntentCreated, json!(intent));
        self.ledger.lock().intents.insert(intent.id.clone(), rec);
        Ok(intent)
    }

    /// Amounts strictly below the threshold are approved on creation.
    pub fn create_mandate(
        &self,
        intent_id: &str,
        amount: Money,
        method: &str,
        actor: &str,
    ) -> Result<Mandate, Ap2Error> {
        if amount.minor() <= 0 {
            return Err(Ap2Error::Invalid("amount must be positive".into()));
        }
        if method.trim().is_empty() {
            return Err(Ap2Error::Invalid("method must not be empty".into()));
        }
        let now = self.clock.now();
        let mut ledger = self.ledger.lock();
        let rec = ledger.intents.get_mut(intent_id).ok_or_else(|| Ap2Error::IntentNotFound(intent_id.to_string()))?;
        if now >= rec.state.intent.expires_at {
            return Err(Ap2Error::Expired(intent_id.to_string()));
        }
        if amount > rec.state.intent.max_amount {
            return Err(Ap2Error::OverMax { amount, max: rec.state.intent.max_amount });
        }
        let mut m = Mandate {
            id: format!("man_{}", uuid::Uuid::new_v4().simple()),
            intent_id: intent_id.to_string(),
            amount,
            method: method.to_string(),
            status: MandateStatus::Pending,
            receipt_id: None,
            created_at: now,
            updated_at: now,
        };
        rec.append(now, actor, AuditKind::MandateCreated, json!(m));
        if amount < self.threshold {
            m.status = MandateStatus::Approved;
            rec.append(now, SYSTEM_ACTOR, AuditKind::MandateApproved, json!({ "mandate_id": m.id, "auto": true }));
        }
        rec.state.mandates.insert(m.id.clone(), m.clone());
        ledger.mandate_intent.insert(m.id.clone(), intent_id.to_string());
        Ok(m)
    }

    pub fn decide(&self, mandate_id: &str, approve: bool, actor: &str) -> Result<Mandate, Ap2Error> {
        let now = self.clock.now();
        let mut ledger = self.ledger.lock();
        let (rec, _) = ledger.mandate_mut(mandate_id)?;
        let m =
            rec.state.mandates.get_mut(mandate_id).ok_or_else(|| Ap2Error::MandateNotFound(mandate_id.to_string()))?;
        if m.status != MandateStatus::Pending {
            let action = if approve { "approve" } else { "decline" };
            return Err(Ap2Error::Illegal { id: mandate_id.to_string(), from: m.status, action });
        }
        m.status = if approve { MandateStatus::Approved } else { MandateStatus::Declined };
        m.updated_at = now;
        let out = m.clone();
        let kind = if approve { AuditKind::MandateApproved } else { AuditKind::MandateDeclined };
        rec.append(now, actor, kind, json!({ "mandate_id": mandate_id, "auto": false }));
        Ok(out)
    }

    pub fn execute(
        &self,
        mandate_id: &str,
        simulate_failure: bool,
        actor: &str,
    ) -> Result<(Mandate, Receipt), Ap2Error> {
        let now = self.clock.now();
        let mut ledger = self.ledger.lock();
        let (rec, _) = ledger.mandate_mut(mandate_id)?;
        let m =
            rec.state.mandates.get_mut(mandate_id).ok_or_else(|| Ap2Error::MandateNotFound(mandate_id.to_string()))?;
        if m.status != MandateStatus::Approved {
            return Err(Ap2Error::Illegal { id: mandate_id.to_string(), from: m.status, action: "execute" });
        }
        if simulate_failure {
            rec.append(
                now,
                actor,
                AuditKind::ExecutionFailed,
                json!({ "mandate_id": mandate_id, "reason": "simulated" }),
            );
            return Err(Ap2Error::ExecutionFailed(mandate_id.to_string()));
        }
        let receipt = Receipt {
            id: format!("rcpt_{}", uuid::Uuid::new_v4().simple()),
            mandate_id: mandate_id.to_string(),
            amount: m.amount,
            executed_at: now,
        };
        m.status = MandateStatus::Executed;
        m.updated_at = now;
        m.receipt_id = Some(receipt.id.clone());
        let out = m.clone();
        rec.state.receipts.insert(mandate_id.to_string(), receipt.clone());
        rec.append(now, actor, AuditKind::MandateExecuted, json!({ "mandate_id": mandate_id, "receipt": receipt }));
        Ok((out, receipt))
    }

    pub fn state(&self, intent_id: &str) -> Result<IntentState, Ap2Error> {
        let ledger = self.ledger.lock();
        ledger
            .intents
            .get(intent_id)
            .map(|r| r.state.clone())
            .ok_or_else(|| Ap2Error::IntentNotFound(intent_id.to_string()))
    }

    pub fn audit(&self, intent_id: &str) -> Result<Vec<AuditEntry>, Ap2Error> {
        let ledger = self.ledger.lock();
        ledger
            .intents
            .get(intent_id)
            .map(|r| r.audit.clone())
            .ok_or_else(|| Ap2Error::IntentNotFound(intent_id.to_string()))
    }

    pub fn mandate(&self, id: &str) -> Result<Mandate, Ap2Error> {
        let ledger = self.ledger.lock();
        let intent = ledger.mandate_intent.get(id).ok_or_else(|| Ap2Error::MandateNotFound(id.to_string()))?;
        Ok(ledger.intents[intent].state.mandates[id].clone())
    }

    /// Mandates sorted by creation time then id.
    pub fn mandates(&self, status: Option<MandateStatus>) -> Vec<Mandate> {
        let ledger = self.ledger.lock();
        let mut out: Vec<Mandate> = ledger
            .intents
            .values()
            .flat_map(|r| r.state.mandates.values())
            .filter(|m| status.is_none_or(|s| m.status == s))
            .cloned()
            .collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }
}

#[derive(Clone)]
pub struct Ap2Handler {
    store: Arc<PaymentStore>,
}

impl Ap2Handler {
    pub fn new(clock: SharedClock, auto_approve_threshold: Money) -> Self {
        Self { store: Arc::new(PaymentStore::new(clock, auto_approve_threshold)) }
    }

    pub fn store(&self) -> &Arc<PaymentStore> {
        &self.store
    }
}

impl ProtocolHandler for Ap2Handler {
    fn descriptor(&self) -> ProtocolDescriptor {
        ProtocolDescriptor {
            name: "ap2",
            version: PROTOCOL_VERSION,
            endpoints: vec![
                "POST /ap2/intents".into(),
                "GET /ap2/intents/{id}".into(),
                "GET /ap2/intents/{id}/audit".into(),
                "POST /ap2/mandates".into(),
                "GET /ap2/mandates".into(),
                "GET /ap2/mandates/{id}".into(),
                "POST /ap2/mandates/{id}/decision".into(),
                "POST /ap2/mandates/{id}/execute".into(),
            ],
        }
    }

    fn routes(&self) -> Router {
        Router::new()
            .route("/ap2/intents", post(create_intent))
            .route("/ap2/intents/{id}", get(get_intent))
            .route("/ap2/intents/{id}/audit", get(get_audit))
            .route("/ap2/mandates", post(create_mandate).get(list_mandates))
            .route("/ap2/mandates/{id}", get(get_mandate))
            .route("/ap2/mandates/{id}/decision", post(decide))
            .route("/ap2/mandates/{id}/execute", post(execute))
            .with_state(self.clone())
    }
}

type JsonBody<T> = Result<Json<T>, axum::extract::rejection::JsonRejection>;

fn actor(principal: &Option<Extension<Principal>>) -> String {
    caller_for(None, principal.as_ref().map(|Extension(p)| p))
}

#[derive(Debug, Deserialize)]
struct IntentBody {
    #[serde(default)]
    caller_id: Option<String>,
    #[serde(default)]
    description: String,
    max_amount: Money,
    #[serde(default = "usd")]
    currency: String,
    #[serde(default)]
    expires_at: Option<DateTime<Utc>>,
    #[serde(default)]
    ttl_secs: Option<i64>,
}

fn usd() -> String {
    "USD".into()
}

async fn create_intent(
    State(h): State<Ap2Handler>,
    principal: Option<Extension<Principal>>,
    body: JsonBody<IntentBody>,
) -> Result<Response, ApiError> {
    let Json(b) = body?;
    let caller = caller_for(b.caller_id.as_deref(), principal.as_ref().map(|Extension(p)| p));
    let expires_at = b.expires_at.or_else(|| b.ttl_secs.map(|s| h.store.clock.now() + Duration::seconds(s)));
    let intent = h.store.create_intent(NewIntent {
        caller_id: &caller,
        description: &b.description,
        max_amount: b.max_amount,
        currency: &b.currency,
        expires_at,
    })?;
    Ok((StatusCode::CREATED, Json(intent)).into_response())
}

async fn get_intent(State(h): State<Ap2Handler>, Path(id): Path<String>) -> Result<Json<IntentState>, ApiError> {
    Ok(Json(h.store.state(&id)?))
}

async fn get_audit(State(h): State<Ap2Handler>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let entries = h.store.audit(&id)?;
    Ok(Json(json!({ "intent_id": id, "entries": entries })))
}

#[derive(Debug, Deserialize)]
struct MandateBody {
    intent_id: String,
    amount: Money,
    #[serde(default = "card")]
    method: String,
}

fn card() -> String {
    "card".into()
}

async fn create_mandate(
    State(h): State<Ap2Handler>,
    principal: Option<Extension<Principal>>,
    body: JsonBody<MandateBody>,
) -> Result<Response, ApiError> {
    let Json(b) = body?;
    let m = h.store.create_mandate(&b.intent_id, b.amount, &b.method, &actor(&principal))?;
    Ok((StatusCode::CREATED, Json(m)).into_response())
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    #[serde(default)]
    status: Option<MandateStatus>,
}

async fn list_mandates(
    State(h): State<Ap2Handler>,
    query: Result<Query<ListQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    Ok(Json(json!({ "mandates": h.store.mandates(q.status) })))
}

async fn get_mandate(State(h): State<Ap2Handler>, Path(id): Path<String>) -> Result<Json<Mandate>, ApiError> {
    Ok(Json(h.store.mandate(&id)?))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Decision {
    Approve,
    Decline,
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    decision: Decision,
}

async fn decide(
    State(h): State<Ap2Handler>,
    principal: Option<Extension<Principal>>,
    Path(id): Path<String>,
    body: JsonBody<DecisionBody>,
) -> Result<Json<Mandate>, ApiError> {
    let Json(b) = body?;
    Ok(Json(h.store.decide(&id, matches!(b.decision, Decision::Approve), &actor(&principal))?))
}

async fn execute(
    State(h): State<Ap2Handler>,
    principal: Option<Extension<Principal>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<Value>, ApiError> {
    let fail = headers
        .get(SIMULATE_HEADER)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.trim().eq_ignore_ascii_case("fail"));
    let (mandate, receipt) = h.store.execute(&id, fail, &actor(&principal))?;
    Ok(Json(json!({ "mandate": mandate, "receipt": receipt })))
}
