use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use stemgate::gateway::clock::{ManualClock, SharedClock};
use stemgate::gateway::{Gateway, GatewayConfig};
use stemgate::perception::Metadata;
use stemgate::protocols::{agui, sse};
use stemgate::toolhub::ToolHubConfig;
use stemgate::Agent;

const WEATHER: &str = "search the weather forecast for Paris";

async fn setup() -> (Router, Agent, ManualClock) {
    let mut cfg = GatewayConfig::default();
    cfg.agent.tools = ToolHubConfig::without_delays();
    cfg.rate_limit.capacity = 10_000;
    let agent = Agent::new(cfg.agent.clone()).await.unwrap();
    let clock = ManualClock::default();
    let shared: SharedClock = Arc::new(clock.clone());
    (Gateway::new(cfg, agent.clone(), shared).router(), agent, clock)
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap()
    }

    fn events(&self) -> Vec<sse::SseEvent> {
        sse::parse(&self.bytes).unwrap()
    }
}

async fn send(router: &Router, req: Request<Body>) -> Reply {
    let res = router.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, headers, bytes }
}

async fn post(router: &Router, uri: &str, body: Value) -> Reply {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    send(router, req).await
}

async fn get(router: &Router, uri: &str) -> Reply {
    send(router, Request::get(uri).body(Body::empty()).unwrap()).await
}

fn ucp_post(uri: &str, key: &str, body: &Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .header("Idempotency-Key", key)
        .header("Request-Id", "r-1")
        .header("UCP-Agent", "tests/1.0")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn ucp_session_lifecycle() {
    let (router, _, _) = setup().await;
    let body = json!({ "items": [{ "name": "tea", "quantity": 3, "unit_price": "2.50" }] });
    let created = send(&router, ucp_post("/ucp/sessions", "k1", &body)).await;
    assert_eq!(created.status, StatusCode::CREATED);
    let session = created.json();
    assert_eq!(session["total"], "7.50");
    assert_eq!(session["items"][0]["line_total"], "7.50");
    assert_eq!(session["status"], "open");
    let id = session["id"].as_str().unwrap().to_string();

    let conflict = send(
        &router,
        ucp_post("/ucp/sessions", "k1", &json!({ "items": [{ "name": "tea", "quantity": 4, "unit_price": "2.50" }] })),
    )
    .await;
    assert_eq!(conflict.status, StatusCode::CONFLICT);

    assert_eq!(get(&router, &format!("/ucp/sessions/{id}")).await.json()["id"], id.as_str());
    assert_eq!(get(&router, "/ucp/sessions/cs_missing").await.status, StatusCode::NOT_FOUND);

    let done = send(&router, ucp_post(&format!("/ucp/sessions/{id}/complete"), "c1", &json!({}))).await;
    assert_eq!(done.status, StatusCode::OK);
    assert_eq!(done.json()["status"], "completed");
    let again = send(&router, ucp_post(&format!("/ucp/sessions/{id}/complete"), "c1", &json!({}))).await;
    assert_eq!(again.status, StatusCode::OK);
    assert!(again.headers.get("idempotent-replayed").is_some());
    let other = send(&router, ucp_post(&format!("/ucp/sessions/{id}/complete"), "c2", &json!({}))).await;
    assert_eq!(other.status, StatusCode::CONFLICT);
    let cancel = send(&router, ucp_post(&format!("/ucp/sessions/{id}/cancel"), "x1", &json!({}))).await;
    assert_eq!(cancel.status, StatusCode::CONFLICT);

    let bad = send(
        &router,
        ucp_post("/ucp/sessions", "k2", &json!({ "items": [{ "name": "x", "quantity": 1, "unit_price": "1.234" }] })),
    )
    .await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn ap2_payment_flow_and_audit() {
    let (router, _, clock) = setup().await;
    let intent = post(&router, "/ap2/intents", json!({ "description": "books", "max_amount": "120.00" })).await;
    assert_eq!(intent.status, StatusCode::CREATED);
    let intent_id = intent.json()["id"].as_str().unwrap().to_string();

    let small = post(&router, "/ap2/mandates", json!({ "intent_id": intent_id, "amount": "49.99" })).await.json();
    assert_eq!(small["status"], "approved");
    let large = post(&router, "/ap2/mandates", json!({ "intent_id": intent_id, "amount": "50.00" })).await.json();
    assert_eq!(large["status"], "pending");
    let over = post(&router, "/ap2/mandates", json!({ "intent_id": intent_id, "amount": "120.01" })).await;
    assert_eq!(over.status, StatusCode::UNPROCESSABLE_ENTITY);

    let pending = get(&router, "/ap2/mandates?status=pending").await.json();
    assert_eq!(pending.as_array().map(Vec::len).or_else(|| pending["mandates"].as_array().map(Vec::len)), Some(1));

    let large_id = large["id"].as_str().unwrap();
    let early = post(&router, &format!("/ap2/mandates/{large_id}/execute"), json!({})).await;
    assert_eq!(early.status, StatusCode::CONFLICT);
    let approved = post(&router, &format!("/ap2/mandates/{large_id}/decision"), json!({ "decision": "approve" })).await;
    assert_eq!(approved.json()["status"], "approved");

    let req = Request::post(format!("/ap2/mandates/{large_id}/execute"))
        .header("x-ap2-simulate", "fail")
        .body(Body::empty())
        .unwrap();
    let failed = send(&router, req).await;
    assert_eq!(failed.status, StatusCode::BAD_GATEWAY);
    assert_eq!(failed.json()["error"]["code"], "payment_failed");
    assert_eq!(get(&router, &format!("/ap2/mandates/{large_id}")).await.json()["status"], "approved");

    let paid = post(&router, &format!("/ap2/mandates/{large_id}/execute"), json!({})).await;
    assert_eq!(paid.status, StatusCode::OK);
    let paid = paid.json();
    assert_eq!(paid["mandate"]["status"], "executed");
    assert_eq!(paid["receipt"]["amount"], "50.00");
    let twice = post(&router, &format!("/ap2/mandates/{large_id}/execute"), json!({})).await;
    assert_eq!(twice.status, StatusCode::CONFLICT);

    let audit = get(&router, &format!("/ap2/intents/{intent_id}/audit")).await.json();
    let kinds: Vec<&str> = audit["entries"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(
        kinds,
        [
            "intent_created",
            "mandate_created",
            "mandate_approved",
            "mandate_created",
            "mandate_approved",
            "execution_failed",
            "mandate_executed"
        ]
    );
    let seqs: Vec<u64> = audit["entries"].as_array().unwrap().iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=7).collect::<Vec<_>>());

    let short = post(&router, "/ap2/intents", json!({ "max_amount": "10.00", "ttl_secs": 60 })).await.json();
    clock.advance(chrono::Duration::seconds(61));
    let expired = post(&router, "/ap2/mandates", json!({ "intent_id": short["id"], "amount": "1.00" })).await;
    assert_eq!(expired.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn a2ui_render_streams() {
    let (router, _, _) = setup().await;
    let checkout = post(&router, "/a2ui/render", json!({ "view": "checkout" })).await;
    assert_eq!(checkout.status, StatusCode::OK);
    let events = checkout.events();
    assert_eq!(events[0].event, "DOCUMENT");
    let doc = &events[0].data["document"];
    assert!(doc["components"][doc["root"].as_str().unwrap()].is_object());
    assert_eq!(events.last().unwrap().event, "PATCH");
    assert_eq!(events.last().unwrap().data["properties"]["text"], "Ready for payment");
    let seqs: Vec<u64> = events.iter().map(|e| e.data["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));

    let gallery = post(&router, "/a2ui/render", json!({ "view": "gallery" })).await.events();
    let types: std::collections::BTreeSet<&str> = gallery[0].data["document"]["components"]
        .as_object()
        .unwrap()
        .values()
        .map(|c| c["type"].as_str().unwrap())
        .collect();
    assert_eq!(types.len(), 16);

    let patched = post(
        &router,
        "/a2ui/render",
        json!({ "view": "checkout", "patches": [{ "id": "nope", "properties": { "text": "x" } }, { "id": "status", "properties": {} }] }),
    )
    .await
    .events();
    let kinds: Vec<&str> = patched.iter().map(|e| e.event.as_str()).collect();
    assert_eq!(kinds.last(), Some(&"ERROR"));
    assert_eq!(patched.last().unwrap().data["error"]["status"], 400);
    assert_eq!(kinds.iter().filter(|k| **k == "PATCH").count(), 1);

    assert_eq!(post(&router, "/a2ui/render", json!({ "view": "carousel" })).await.status, StatusCode::BAD_REQUEST);
    let cyclic = json!({
        "view": "custom",
        "document": {
            "root": "a",
            "components": {
                "a": { "type": "column", "properties": {}, "children": ["b"] },
                "b": { "type": "row", "properties": {}, "children": ["a"] }
            }
        }
    });
    assert_eq!(post(&router, "/a2ui/render", cyclic).await.status, StatusCode::BAD_REQUEST);
    let unknown = json!({
        "view": "custom",
        "document": { "root": "a", "components": { "a": { "type": "hologram", "properties": {}, "children": [] } } }
    });
    let reply = post(&router, "/a2ui/render", unknown).await;
    assert_eq!(reply.status, StatusCode::BAD_REQUEST);
    assert!(reply.json()["error"]["message"].as_str().unwrap().contains("hologram"));
}

fn rpc(id: i64, method: &str, params: Value) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "method": method, "params": params })
}

#[tokio::test]
async fn a2a_send_get_cancel() {
    let (router, _, _) = setup().await;
    let sent = post(
        &router,
        "/a2a",
        rpc(1, "tasks/send", json!({ "id": "t1", "message": WEATHER, "metadata": { "caller_id": "bob" } })),
    )
    .await
    .json();
    assert_eq!(sent["id"], 1);
    let task = &sent["result"]["task"];
    assert_eq!(task["state"], "completed");
    assert_eq!(task["metadata"]["success"], true);
    let states: Vec<&str> = task["history"].as_array().unwrap().iter().map(|h| h["state"].as_str().unwrap()).collect();
    assert_eq!(states, ["submitted", "working", "completed"]);

    let fetched = post(&router, "/a2a", rpc(2, "tasks/get", json!({ "id": "t1" }))).await.json();
    assert_eq!(fetched["result"]["task"]["id"], "t1");
    let cancel = post(&router, "/a2a", rpc(3, "tasks/cancel", json!({ "id": "t1" }))).await.json();
    assert_eq!(cancel["error"]["code"], -32002);
    let missing = post(&router, "/a2a", rpc(4, "tasks/get", json!({ "id": "ghost" }))).await.json();
    assert_eq!(missing["error"]["code"], -32001);
    let dup = post(&router, "/a2a", rpc(5, "tasks/send", json!({ "id": "t1", "message": "hello" }))).await.json();
    assert!(dup["error"].is_object());
    let bad = post(&router, "/a2a", rpc(6, "tasks/get", json!({ "task": 1 }))).await.json();
    assert_eq!(bad["error"]["code"], -32602);

    let raw = Request::post("/a2a").header("content-type", "application/json").body(Body::from("{oops")).unwrap();
    assert_eq!(send(&router, raw).await.json()["error"]["code"], -32700);
    let note =
        post(&router, "/a2a", json!({ "jsonrpc": "2.0", "method": "tasks/get", "params": { "id": "t1" } })).await;
    assert_eq!(note.status, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn a2a_send_subscribe_streams_status() {
    let (router, _, _) = setup().await;
    let reply = post(&router, "/a2a", rpc(7, "tasks/sendSubscribe", json!({ "message": WEATHER }))).await;
    assert_eq!(reply.status, StatusCode::OK);
    let events = reply.events();
    assert!(events.iter().all(|e| e.data["jsonrpc"] == "2.0" && e.data["id"] == 7));
    let states: Vec<&str> = events
        .iter()
        .filter(|e| e.event == "task-status")
        .map(|e| e.data["result"]["status"]["state"].as_str().unwrap())
        .collect();
    assert_eq!(states, ["submitted", "working", "completed"]);
    let last = events.last().unwrap();
    assert_eq!(last.event, "task-status");
    assert_eq!(last.data["result"]["status"]["state"], "completed");
    assert_eq!(last.data["result"]["final"], true);
    assert_eq!(events.iter().filter(|e| e.data["result"]["final"] == true).count(), 1);
    assert!(events.iter().any(|e| e.event == "task-artifact"));
}

fn tool_brackets(events: &[Value]) -> HashMap<String, Vec<String>> {
    let mut seen: HashMap<String, Vec<String>> = HashMap::new();
    for e in events {
        let kind = e["type"].as_str().unwrap();
        if kind.starts_with("TOOL_CALL_") {
            let id = e["tool_call_id"].as_str().unwrap().to_string();
            seen.entry(id).or_default().push(kind.to_string());
        }
    }
    seen
}

#[tokio::test]
async fn agui_tool_calls_are_bracketed_and_shortcut_skips_reasoning() {
    let (router, agent, _) = setup().await;
    let first = post(&router, "/ag-ui", json!({ "message": WEATHER, "caller_id": "carol" })).await;
    let events: Vec<Value> = first.events().into_iter().map(|e| e.data).collect();
    agui::check_stream(&events).unwrap();
    let brackets = tool_brackets(&events);
    assert!(!brackets.is_empty());
    for kinds in brackets.values() {
        assert_eq!(kinds, &["TOOL_CALL_START", "TOOL_CALL_ARGS", "TOOL_CALL_END"]);
    }
    assert!(events.iter().any(|e| e["type"] == "REASONING_MESSAGE"));

    for _ in 0..6 {
        agent.run("carol", WEATHER, &Metadata::new()).await.unwrap();
        agent.settle().await;
    }
    let shortcut = post(&router, "/ag-ui", json!({ "message": WEATHER, "caller_id": "carol" })).await;
    let events: Vec<Value> = shortcut.events().into_iter().map(|e| e.data).collect();
    agui::check_stream(&events).unwrap();
    let finished = events.iter().find(|e| e["type"] == "RUN_FINISHED").unwrap();
    assert_eq!(finished["result"]["skill_shortcut_used"], true);
    assert_eq!(events.iter().filter(|e| e["type"] == "REASONING_MESSAGE").count(), 0);
    assert!(!tool_brackets(&events).is_empty());

    let text: String =
        events.iter().filter(|e| e["type"] == "TEXT_MESSAGE_CONTENT").map(|e| e["delta"].as_str().unwrap()).collect();
    assert_eq!(text, finished["result"]["response"].as_str().unwrap());

    assert_eq!(post(&router, "/ag-ui", json!({ "caller_id": "carol" })).await.status, StatusCode::BAD_REQUEST);
    let empty: Vec<Value> =
        post(&router, "/ag-ui", json!({ "message": "" })).await.events().into_iter().map(|e| e.data).collect();
    agui::check_stream(&empty).unwrap();
    assert_eq!(empty.last().unwrap()["type"], "RUN_ERROR");
}
