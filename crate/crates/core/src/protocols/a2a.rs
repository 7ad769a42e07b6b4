//! A2A task delegation over JSON-RPC 2.0 (`POST /a2a`).
//!
//! Methods: `tasks/send`, `tasks/sendSubscribe` (SSE), `tasks/get`,
//! `tasks/cancel`. Push notifications and input-required turns are not
//! offered; the agent card says so.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Extension, Json, Router};
use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{caller_for, sse, ProtocolDescriptor, ProtocolHandler};
use crate::cognition::Agent;
use crate::gateway::clock::SharedClock;
use crate::gateway::Principal;
use crate::jsonrpc::{self, RpcError};
use crate::perception::Metadata;

pub const PROTOCOL_VERSION: &str = "0.3.0";
pub const TASK_NOT_FOUND: i64 = -32001;
pub const TASK_TERMINAL: i64 = -32002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Submitted,
    Working,
    Completed,
    Failed,
    Canceled,
}

impl TaskState {
    pub const ALL: [TaskState; 5] =
        [TaskState::Submitted, TaskState::Working, TaskState::Completed, TaskState::Failed, TaskState::Canceled];

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Completed | TaskState::Failed | TaskState::Canceled)
    }
}

/// Every legal (from, to) pair.
pub const TRANSITIONS: &[(TaskState, TaskState)] = &[
    (TaskState::Submitted, TaskState::Working),
    (TaskState::Submitted, TaskState::Canceled),
    (TaskState::Working, TaskState::Completed),
    (TaskState::Working, TaskState::Failed),
    (TaskState::Working, TaskState::Canceled),
];

pub fn can_transition(from: TaskState, to: TaskState) -> bool {
    TRANSITIONS.contains(&(from, to))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    #[serde(rename = "type", default = "text_kind")]
    pub kind: String,
    #[serde(default)]
    pub text: String,
}

fn text_kind() -> String {
    "text".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMessage {
    pub role: String,
    pub parts: Vec<Part>,
}

impl TaskMessage {
    pub fn text(role: &str, text: &str) -> Self {
        Self { role: role.into(), parts: vec![Part { kind: text_kind(), text: text.into() }] }
    }

    pub fn joined_text(&self) -> String {
        let texts: Vec<&str> = self.parts.iter().filter(|p| p.kind == "text").map(|p| p.text.as_str()).collect();
        texts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEntry {
    pub state: TaskState,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2aTask {
    pub id: String,
    pub state: TaskState,
    pub messages: Vec<TaskMessage>,
    pub artifacts: Vec<Artifact>,
    pub history: Vec<StatusEntry>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Value>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("task not found: {0}")]
    NotFound(String),
    #[error("task {id} is in terminal state {state:?}")]
    Terminal { id: String, state: TaskState },
    #[error("illegal transition {from:?} -> {to:?}")]
    Illegal { from: TaskState, to: TaskState },
    #[error("task id already in use: {0}")]
    Duplicate(String),
}

impl TaskError {
    pub fn rpc(&self) -> RpcError {
        match self {
            TaskError::NotFound(_) => RpcError::new(TASK_NOT_FOUND, self.to_string()),
            TaskError::Terminal { .. } | TaskError::Illegal { .. } => RpcError::new(TASK_TERMINAL, self.to_string()),
            TaskError::Duplicate(_) => RpcError::invalid_params(self.to_string()),
        }
    }
}

/// Concurrent task map; each task is mutated under its own lock.
pub struct TaskStore {
    tasks: RwLock<HashMap<String, Arc<Mutex<A2aTask>>>>,
    clock: SharedClock,
}

impl TaskStore {
    pub fn new(clock: SharedClock) -> Self {
        Self { tasks: RwLock::new(HashMap::new()), clock }
    }

    pub fn create(&self, id: Option<String>, message: TaskMessage) -> Result<A2aTask, TaskError> {
        let now = self.clock.now();
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        let task = A2aTask {
            id: id.clone(),
            state: TaskState::Submitted,
            messages: vec![message],
            artifacts: Vec::new(),
            history: vec![StatusEntry { state: TaskState::Submitted, timestamp: now }],
            created_at: now,
            updated_at: now,
            metadata: None,
        };
        let mut tasks = self.tasks.write();
        if tasks.contains_key(&id) {
            return Err(TaskError::Duplicate(id));
        }
        tasks.insert(id, Arc::new(Mutex::new(task.clone())));
        Ok(task)
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<A2aTask>>, TaskError> {
        self.tasks.read().get(id).cloned().ok_or_else(|| TaskError::NotFound(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<A2aTask, TaskError> {
        Ok(self.slot(id)?.lock().clone())
    }

    /// Applies `to` and lets `edit` amend the task in the same critical section.
    pub fn transition(&self, id: &str, to: TaskState, edit: impl FnOnce(&mut A2aTask)) -> Result<A2aTask, TaskError> {
        let slot = self.slot(id)?;
        let mut t = slot.lock();
        if !can_transition(t.state, to) {
            return Err(if t.state.is_terminal() {
                TaskError::Terminal { id: id.to_string(), state: t.state }
            } else {
                TaskError::Illegal { from: t.state, to }
            });
        }
        let now = self.clock.now();
        t.state = to;
        t.updated_at = now;
        t.history.push(StatusEntry { state: to, timestamp: now });
        edit(&mut t);
        Ok(t.clone())
    }

    pub fn cancel(&self, id: &str) -> Result<A2aTask, TaskError> {
        self.transition(id, TaskState::Canceled, |_| {})
    }

    pub fn len(&self) -> usize {
        self.tasks.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.read().is_empty()
    }
}

#[derive(Clone)]
pub struct A2aHandler {
    agent: Agent,
    store: Arc<TaskStore>,
}

impl A2aHandler {
    pub fn new(agent: Agent, clock: SharedClock) -> Self {
        Self { agent, store: Arc::new(TaskStore::new(clock)) }
    }

    pub fn store(&self) -> &Arc<TaskStore> {
        &self.store
    }
}

impl ProtocolHandler for A2aHandler {
    fn descriptor(&self) -> ProtocolDescriptor {
        ProtocolDescriptor { name: "a2a", version: PROTOCOL_VERSION, endpoints: vec!["POST /a2a".into()] }
    }

    fn routes(&self) -> Router {
        Router::new().route("/a2a", post(rpc)).with_state(self.clone())
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MessageParam {
    Text(String),
    Structured(TaskMessage),
}

#[derive(Debug, Deserialize)]
struct SendParams {
    #[serde(default)]
    id: Option<String>,
    message: MessageParam,
    #[serde(default)]
    metadata: Option<Value>,
}

#[derive(Debug, Deserialize)]
struct IdParams {
    id: String,
}

fn params<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, RpcError> {
    serde_json::from_value(v.clone()).map_err(|e| RpcError::invalid_params(format!("Invalid params: {e}")))
}

fn reply(id: Option<Value>, out: Result<Value, RpcError>) -> Response {
    let Some(id) = id else {
        return StatusCode::NO_CONTENT.into_response();
    };
    Json(match out {
        Ok(result) => jsonrpc::success(id, result),
        Err(e) => jsonrpc::failure(id, e),
    })
    .into_response()
}

async fn rpc(State(h): State<A2aHandler>, principal: Option<Extension<Principal>>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            let err = RpcError::new(jsonrpc::PARSE_ERROR, format!("Parse error: {e}"));
            return Json(jsonrpc::failure(Value::Null, err)).into_response();
        }
    };
    let req = match jsonrpc::parse_request(&value) {
        Ok(r) => r,
        Err((id, err)) => return Json(jsonrpc::failure(id, err)).into_response(),
    };
    let principal = principal.map(|Extension(p)| p);
    match req.method.as_str() {
        "tasks/send" => {
            let out = match prepare(&h, &req.params, principal.as_ref()) {
                Ok((task_id, caller, text)) => {
                    Ok(json!({ "task": execute(&h, &task_id, &caller, &text, |_| {}).await }))
                }
                Err(e) => Err(e),
            };
            reply(req.id, out)
        }
        "tasks/sendSubscribe" => match prepare(&h, &req.params, principal.as_ref()) {
            Ok((task_id, caller, text)) => {
                let rpc_id = req.id.unwrap_or(Value::Null);
                sse::response(move |tx| async move {
                    let guard = CancelOnDrop { store: h.store.clone(), id: task_id.clone(), armed: true };
                    let sink = |kind: &str, result: Value| {
                        let _ = tx.send((kind.to_string(), jsonrpc::success(rpc_id.clone(), result)));
                    };
                    sink("task-status", status_event(&h.store.get(&task_id).ok(), false));
                    let task =
                        execute(&h, &task_id, &caller, &text, |t| sink("task-status", status_event(&Some(t), false)))
                            .await;
                    for a in &task.artifacts {
                        sink("task-artifact", json!({ "kind": "artifact-update", "taskId": task.id, "artifact": a }));
                    }
                    sink("task-status", status_event(&Some(task), true));
                    guard.disarm();
                })
            }
            Err(e) => reply(req.id, Err(e)),
        },
        "tasks/get" => {
            let out = params::<IdParams>(&req.params)
                .and_then(|p| h.store.get(&p.id).map_err(|e| e.rpc()))
                .map(|t| json!({ "task": t }));
            reply(req.id, out)
        }
        "tasks/cancel" => {
            let out = params::<IdParams>(&req.params)
                .and_then(|p| h.store.cancel(&p.id).map_err(|e| e.rpc()))
                .map(|t| json!({ "task": t }));
            reply(req.id, out)
        }
        other => reply(req.id, Err(RpcError::new(jsonrpc::METHOD_NOT_FOUND, format!("Method not found: {other}")))),
    }
}

fn status_event(task: &Option<A2aTask>, last: bool) -> Value {
    match task {
        Some(t) => json!({
            "kind": "status-update",
            "taskId": t.id,
            "status": { "state": t.state, "timestamp": t.updated_at },
            "final": last,
        }),
        None => json!({ "kind": "status-update", "final": last }),
    }
}

/// Validates params and creates the task in `submitted`.
fn prepare(h: &A2aHandler, raw: &Value, principal: Option<&Principal>) -> Result<(String, String, String), RpcError> {
    let p: SendParams = params(raw)?;
    let message = match p.message {
        MessageParam::Text(t) => TaskMessage::text("user", &t),
        MessageParam::Structured(m) => m,
    };
    let text = message.joined_text();
    if text.trim().is_empty() {
        return Err(RpcError::invalid_params("Invalid params: message has no text"));
    }
    let explicit = p.metadata.as_ref().and_then(|m| m.get("caller_id")).and_then(Value::as_str);
    let caller = caller_for(explicit, principal);
    let task = h.store.create(p.id, message).map_err(|e| e.rpc())?;
    Ok((task.id, caller, text))
}

struct CancelOnDrop {
    store: Arc<TaskStore>,
    id: String,
    armed: bool,
}

impl CancelOnDrop {
    fn disarm(mut self) {
        self.armed = false;
    }
}

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        if self.armed {
            let _ = self.store.cancel(&self.id);
        }
    }
}

/// Moves a submitted task through working to its terminal state.
async fn execute(h: &A2aHandler, task_id: &str, caller: &str, text: &str, on_working: impl FnOnce(A2aTask)) -> A2aTask {
    match h.store.transition(task_id, TaskState::Working, |_| {}) {
        Ok(t) => on_working(t),
        Err(_) => return h.store.get(task_id).unwrap_or_else(|_| unreachable_task(task_id)),
    }
    let outcome = h.agent.run(caller, text, &Metadata::new()).await;
    let finished = match outcome {
        Ok(result) => {
            let to = if result.success { TaskState::Completed } else { TaskState::Failed };
            let response = result.response.clone();
            let meta = serde_json::to_value(&result).ok();
            h.store.transition(task_id, to, move |t| {
                t.messages.push(TaskMessage::text("agent", &response));
                t.artifacts.push(Artifact {
                    name: "response".into(),
                    parts: vec![Part { kind: text_kind(), text: response }],
                });
                t.metadata = meta;
            })
        }
        Err(e) => {
            let why = e.to_string();
            h.store.transition(task_id, TaskState::Failed, move |t| {
                t.messages.push(TaskMessage::text("agent", &why));
                t.metadata = Some(json!({ "error": why }));
            })
        }
    };
    // a concurrent cancel wins; report the task as it now stands
    finished.or_else(|_| h.store.get(task_id)).unwrap_or_else(|_| unreachable_task(task_id))
}

fn unreachable_task(id: &str) -> A2aTask {
    let now = Utc::now();
    A2aTask {
        id: id.to_string(),
        state: TaskState::Failed,
        messages: vec![],
        artifacts: vec![],
        history: vec![],
        created_at: now,
        updated_at: now,
        metadata: None,
    }
}
