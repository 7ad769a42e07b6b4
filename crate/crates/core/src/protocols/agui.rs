//! AG-UI: streams one pipeline run as typed server-sent events (`POST /ag-ui`).
//!
//! Stream grammar:
//!
//! ```text
//! RUN_STARTED body+ TEXT_MESSAGE_START TEXT_MESSAGE_CONTENT+ TEXT_MESSAGE_END RUN_FINISHED
//! body := REASONING_MESSAGE | STATE_SNAPSHOT | STATE_DELTA
//!       | TOOL_CALL_START TOOL_CALL_ARGS TOOL_CALL_END      (per call id)
//! ```
//!
//! `RUN_ERROR` may replace everything after `RUN_STARTED`.

use std::collections::{HashMap, HashSet};

use axum::extract::State;
use axum::response::Response;
use axum::routing::post;
use axum::{Extension, Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::mpsc::{self, UnboundedSender};

use super::{caller_for, sse, ProtocolDescriptor, ProtocolHandler};
use crate::cognition::{Agent, PipelineEvent, PipelineResult};
use crate::gateway::error::{current_correlation_id, ApiError};
use crate::gateway::Principal;
use crate::perception::Metadata;
use crate::toolhub::StepReport;

pub const PROTOCOL_VERSION: &str = "0.1.0";

/// Words per `TEXT_MESSAGE_CONTENT` chunk.
pub const CHUNK_WORDS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    RunStarted,
    RunFinished,
    RunError,
    TextMessageStart,
    TextMessageContent,
    TextMessageEnd,
    ReasoningMessage,
    ToolCallStart,
    ToolCallArgs,
    ToolCallEnd,
    StateSnapshot,
    StateDelta,
}

impl EventType {
    pub const ALL: [EventType; 12] = [
        EventType::RunStarted,
        EventType::RunFinished,
        EventType::RunError,
        EventType::TextMessageStart,
        EventType::TextMessageContent,
        EventType::TextMessageEnd,
        EventType::ReasoningMessage,
        EventType::ToolCallStart,
        EventType::ToolCallArgs,
        EventType::ToolCallEnd,
        EventType::StateSnapshot,
        EventType::StateDelta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::RunStarted => "RUN_STARTED",
            EventType::RunFinished => "RUN_FINISHED",
            EventType::RunError => "RUN_ERROR",
            EventType::TextMessageStart => "TEXT_MESSAGE_START",
            EventType::TextMessageContent => "TEXT_MESSAGE_CONTENT",
            EventType::TextMessageEnd => "TEXT_MESSAGE_END",
            EventType::ReasoningMessage => "REASONING_MESSAGE",
            EventType::ToolCallStart => "TOOL_CALL_START",
            EventType::ToolCallArgs => "TOOL_CALL_ARGS",
            EventType::ToolCallEnd => "TOOL_CALL_END",
            EventType::StateSnapshot => "STATE_SNAPSHOT",
            EventType::StateDelta => "STATE_DELTA",
        }
    }

    pub fn parse(s: &str) -> Option<EventType> {
        EventType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// One emitted event: `type`, `run_id`, `seq`, then the payload fields.
#[derive(Debug, Clone, PartialEq)]
pub struct AgUiEvent {
    pub kind: EventType,
    pub run_id: String,
    pub seq: u64,
    pub payload: serde_json::Map<String, Value>,
}

impl AgUiEvent {
    pub fn to_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        m.insert("type".into(), json!(self.kind.as_str()));
        m.insert("run_id".into(), json!(self.run_id));
        m.insert("seq".into(), json!(self.seq));
        m.extend(self.payload.clone());
        Value::Object(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CallState {
    Started,
    Argued,
}

#[derive(Debug, PartialEq, Eq)]
enum Stage {
    Start,
    Body { seen: bool },
    Text { message_id: String, chunks: usize },
    Closed,
    Done,
}

/// Reference grammar check over decoded event payloads.
pub fn check_stream(events: &[Value]) -> Result<(), String> {
    let mut stage = Stage::Start;
    let mut open: HashMap<String, CallState> = HashMap::new();
    let mut used: HashSet<String> = HashSet::new();
    let mut last_seq: Option<u64> = None;
    let mut run_id: Option<&str> = None;
    for (i, e) in events.iter().enumerate() {
        let err = |why: &str| Err(format!("event {i}: {why}"));
        let Some(kind) = e.get("type").and_then(Value::as_str).and_then(EventType::parse) else {
            return err("missing or unknown type");
        };
        let Some(seq) = e.get("seq").and_then(Value::as_u64) else {
            return err("missing seq");
        };
        if last_seq.is_some_and(|s| seq <= s) {
            return err("seq not strictly increasing");
        }
        last_seq = Some(seq);
        let Some(rid) = e.get("run_id").and_then(Value::as_str) else {
            return err("missing run_id");
        };
        if *run_id.get_or_insert(rid) != rid {
            return err("run_id changed mid-stream");
        }
        let call_id = || e.get("tool_call_id").and_then(Value::as_str).map(str::to_string);
        stage = match (stage, kind) {
            (Stage::Start, EventType::RunStarted) => Stage::Body { seen: false },
            (Stage::Start, _) => return err("stream must open with RUN_STARTED"),
            (Stage::Done, _) => return err("event after terminal event"),
            (_, EventType::RunError) => Stage::Done,
            (Stage::Body { .. }, EventType::ReasoningMessage | EventType::StateSnapshot | EventType::StateDelta) => {
                Stage::Body { seen: true }
            }
            (Stage::Body { .. }, EventType::ToolCallStart) => {
                let Some(id) = call_id() else { return err("TOOL_CALL_START without tool_call_id") };
                if !used.insert(id.clone()) {
                    return err("tool_call_id reused");
                }
                open.insert(id, CallState::Started);
                Stage::Body { seen: true }
            }
            (Stage::Body { .. }, EventType::ToolCallArgs) => {
                let Some(id) = call_id() else { return err("TOOL_CALL_ARGS without tool_call_id") };
                if open.get(&id) != Some(&CallState::Started) {
                    return err("TOOL_CALL_ARGS outside its START/END bracket");
                }
                open.insert(id, CallState::Argued);
                Stage::Body { seen: true }
            }
            (Stage::Body { .. }, EventType::ToolCallEnd) => {
                let Some(id) = call_id() else { return err("TOOL_CALL_END without tool_call_id") };
                if open.remove(&id) != Some(CallState::Argued) {
                    return err("TOOL_CALL_END without matching START and ARGS");
                }
                Stage::Body { seen: true }
            }
            (Stage::Body { seen }, EventType::TextMessageStart) => {
                if !seen {
                    return err("no progress event before the text message");
                }
                if !open.is_empty() {
                    return err("text message started with tool calls still open");
                }
                let Some(mid) = e.get("message_id").and_then(Value::as_str) else {
                    return err("TEXT_MESSAGE_START without message_id");
                };
                Stage::Text { message_id: mid.to_string(), chunks: 0 }
            }
            (Stage::Text { message_id, chunks }, EventType::TextMessageContent) => {
                if e.get("message_id").and_then(Value::as_str) != Some(message_id.as_str()) {
                    return err("content for a different message");
                }
                if !e.get("delta").is_some_and(Value::is_string) {
                    return err("content without a string delta");
                }
                Stage::Text { message_id, chunks: chunks + 1 }
            }
            (Stage::Text { message_id, chunks }, EventType::TextMessageEnd) => {
                if chunks == 0 {
                    return err("text message has no content");
                }
                if e.get("message_id").and_then(Value::as_str) != Some(message_id.as_str()) {
                    return err("end for a different message");
                }
                Stage::Closed
            }
            (Stage::Closed, EventType::RunFinished) => Stage::Done,
            (s, k) => return err(&format!("{} not allowed in {:?}", k.as_str(), s)),
        };
    }
    if stage == Stage::Done {
        Ok(())
    } else {
        Err("stream ended without a terminal event".into())
    }
}

/// Splits `text` into chunks of whole words whose concatenation is `text`.
pub fn chunk_text(text: &str, words: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut count = 0;
    for piece in text.split_inclusive(char::is_whitespace) {
        cur.push_str(piece);
        if piece.ends_with(char::is_whitespace) {
            count += 1;
            if count == words.max(1) {
                out.push(std::mem::take(&mut cur));
                count = 0;
            }
        }
    }
    if !cur.is_empty() || out.is_empty() {
        out.push(cur);
    }
    out
}

/// Converts pipeline events into AG-UI events with a single seq counter.
pub struct StreamBuilder {
    run_id: String,
    seq: u64,
    phases: Vec<Value>,
    started_calls: HashSet<String>,
}

impl StreamBuilder {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self { run_id: run_id.into(), seq: 0, phases: Vec::new(), started_calls: HashSet::new() }
    }

    fn push(&mut self, out: &mut Vec<AgUiEvent>, kind: EventType, payload: Value) {
        self.seq += 1;
        let payload = match payload {
            Value::Object(m) => m,
            _ => serde_json::Map::new(),
        };
        out.push(AgUiEvent { kind, run_id: self.run_id.clone(), seq: self.seq, payload });
    }

    pub fn started(&mut self, caller_id: &str, thread_id: &str) -> Vec<AgUiEvent> {
        let mut out = Vec::new();
        self.push(&mut out, EventType::RunStarted, json!({ "thread_id": thread_id, "caller_id": caller_id }));
        out
    }

    fn call_start(&mut self, out: &mut Vec<AgUiEvent>, id: &str, tool: &str, arguments: &Value) {
        self.started_calls.insert(id.to_string());
        self.push(out, EventType::ToolCallStart, json!({ "tool_call_id": id, "tool_call_name": tool }));
        self.push(out, EventType::ToolCallArgs, json!({ "tool_call_id": id, "delta": arguments.to_string() }));
    }

    pub fn pipeline(&mut self, event: &PipelineEvent) -> Vec<AgUiEvent> {
        let mut out = Vec::new();
        match event {
            PipelineEvent::PhaseStarted { .. } => {}
            PipelineEvent::PhaseFinished { entry } => {
                let value = json!(entry);
                self.phases.push(value.clone());
                self.push(
                    &mut out,
                    EventType::StateDelta,
                    json!({ "delta": [{ "op": "add", "path": "/phases/-", "value": value }] }),
                );
            }
            PipelineEvent::Parameters { parameters } => {
                let snapshot = json!({ "phases": self.phases, "parameters": parameters });
                self.push(&mut out, EventType::StateSnapshot, json!({ "snapshot": snapshot }));
            }
            PipelineEvent::Reasoning { step } => {
                self.push(&mut out, EventType::ReasoningMessage, json!({ "kind": step.kind, "text": step.text }));
            }
            PipelineEvent::ToolCallStarted { step_id, tool, arguments } => {
                self.call_start(&mut out, step_id, tool, arguments);
            }
            PipelineEvent::ToolCallFinished { report } => self.call_end(&mut out, report),
        }
        out
    }

    fn call_end(&mut self, out: &mut Vec<AgUiEvent>, r: &StepReport) {
        // skipped steps finish without ever starting
        if !self.started_calls.contains(&r.id) {
            self.call_start(out, &r.id, &r.tool, &r.arguments);
        }
        self.push(
            out,
            EventType::ToolCallEnd,
            json!({ "tool_call_id": r.id, "status": r.status, "attempts": r.attempts, "output": r.output, "error": r.error }),
        );
    }

    pub fn finished(&mut self, result: &PipelineResult) -> Vec<AgUiEvent> {
        let mut out = Vec::new();
        let message_id = format!("{}-msg", self.run_id);
        self.push(&mut out, EventType::TextMessageStart, json!({ "message_id": message_id, "role": "assistant" }));
        for chunk in chunk_text(&result.response, CHUNK_WORDS) {
            self.push(&mut out, EventType::TextMessageContent, json!({ "message_id": message_id, "delta": chunk }));
        }
        self.push(&mut out, EventType::TextMessageEnd, json!({ "message_id": message_id }));
        self.push(&mut out, EventType::RunFinished, json!({ "success": result.success, "result": result }));
        out
    }

    pub fn failed(&mut self, code: &str, message: &str) -> Vec<AgUiEvent> {
        let mut out = Vec::new();
        let envelope = json!({ "code": code, "message": message, "correlation_id": current_correlation_id() });
        self.push(&mut out, EventType::RunError, json!({ "error": envelope }));
        out
    }
}

#[derive(Clone)]
pub struct AgUiHandler {
    agent: Agent,
}

impl AgUiHandler {
    pub fn new(agent: Agent) -> Self {
        Self { agent }
    }
}

impl ProtocolHandler for AgUiHandler {
    fn descriptor(&self) -> ProtocolDescriptor {
        ProtocolDescriptor { name: "ag-ui", version: PROTOCOL_VERSION, endpoints: vec!["POST /ag-ui".into()] }
    }

    fn routes(&self) -> Router {
        Router::new().route("/ag-ui", post(run)).with_state(self.clone())
    }
}

#[derive(Debug, Deserialize)]
struct InputMessage {
    #[serde(default)]
    role: String,
    #[serde(default)]
    content: String,
}

#[derive(Debug, Deserialize)]
pub struct RunRequest {
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    messages: Vec<InputMessage>,
    #[serde(default)]
    caller_id: Option<String>,
    #[serde(default)]
    thread_id: Option<String>,
    #[serde(default)]
    run_id: Option<String>,
}

impl RunRequest {
    fn text(&self) -> Option<String> {
        self.message.clone().or_else(|| {
            self.messages.iter().rev().find(|m| m.role.is_empty() || m.role == "user").map(|m| m.content.clone())
        })
    }
}

fn send_all(tx: &UnboundedSender<(String, Value)>, events: Vec<AgUiEvent>) {
    for e in events {
        let _ = tx.send((e.kind.as_str().to_string(), e.to_json()));
    }
}

async fn run(
    State(h): State<AgUiHandler>,
    principal: Option<Extension<Principal>>,
    body: Result<Json<RunRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let Some(message) = req.text() else {
        return Err(ApiError::bad_request("body must carry `message` or a user entry in `messages`"));
    };
    let caller = caller_for(req.caller_id.as_deref(), principal.as_ref().map(|Extension(p)| p));
    let run_id = req.run_id.clone().unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let thread_id = req.thread_id.clone().unwrap_or_else(|| run_id.clone());
    let correlation = current_correlation_id();
    Ok(sse::response(move |tx| {
        let fut = async move {
            let mut b = StreamBuilder::new(run_id);
            send_all(&tx, b.started(&caller, &thread_id));
            let (etx, mut erx) = mpsc::unbounded_channel();
            let agent = h.agent.clone();
            let run = async move { agent.run_with_events(&caller, &message, &Metadata::new(), Some(etx)).await };
            let forward = async {
                while let Some(ev) = erx.recv().await {
                    send_all(&tx, b.pipeline(&ev));
                }
            };
            let (outcome, ()) = tokio::join!(run, forward);
            match outcome {
                Ok(result) => send_all(&tx, b.finished(&result)),
                Err(e) => send_all(&tx, b.failed("pipeline_error", &e.to_string())),
            }
        };
        crate::gateway::error::CORRELATION_ID.scope(correlation, fut)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: &str, seq: u64, extra: Value) -> Value {
        let mut v = json!({ "type": kind, "run_id": "r", "seq": seq });
        v.as_object_mut().unwrap().extend(extra.as_object().cloned().unwrap_or_default());
        v
    }

    fn happy() -> Vec<Value> {
        vec![
            ev("RUN_STARTED", 1, json!({})),
            ev("STATE_DELTA", 2, json!({})),
            ev("TOOL_CALL_START", 3, json!({"tool_call_id": "s1"})),
            ev("TOOL_CALL_ARGS", 4, json!({"tool_call_id": "s1"})),
            ev("TOOL_CALL_END", 5, json!({"tool_call_id": "s1"})),
            ev("TEXT_MESSAGE_START", 6, json!({"message_id": "m"})),
            ev("TEXT_MESSAGE_CONTENT", 7, json!({"message_id": "m", "delta": "hi"})),
            ev("TEXT_MESSAGE_END", 8, json!({"message_id": "m"})),
            ev("RUN_FINISHED", 9, json!({})),
        ]
    }

    #[test]
    fn grammar_accepts_and_rejects() {
        check_stream(&happy()).unwrap();
        let mut no_end = happy();
        no_end.remove(4);
        assert!(check_stream(&no_end).is_err());
        let mut twice = happy();
        twice.push(ev("RUN_FINISHED", 10, json!({})));
        assert!(check_stream(&twice).is_err());
        let mut bad_seq = happy();
        bad_seq[3]["seq"] = json!(2);
        assert!(check_stream(&bad_seq).is_err());
        let error = vec![ev("RUN_STARTED", 1, json!({})), ev("RUN_ERROR", 2, json!({}))];
        check_stream(&error).unwrap();
        assert!(check_stream(&happy()[1..]).is_err());
        assert!(check_stream(&happy()[..8]).is_err());
    }

    #[test]
    fn chunks_concatenate() {
        let text = "one two three four five six seven eight  nine";
        let chunks = chunk_text(text, 3);
        assert_eq!(chunks.concat(), text);
        assert_eq!(chunks[0], "one two three ");
        assert_eq!(chunk_text("", 3), vec![String::new()]);
    }

    #[test]
    fn wire_names() {
        for t in EventType::ALL {
            assert_eq!(serde_json::to_value(t).unwrap(), json!(t.as_str()));
            assert_eq!(EventType::parse(t.as_str()), Some(t));
        }
    }
}
