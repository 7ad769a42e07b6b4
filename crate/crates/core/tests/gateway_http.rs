use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::routing::get;
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use stemgate::gateway::clock::{ManualClock, SharedClock};
use stemgate::gateway::{Gateway, GatewayConfig};
use stemgate::protocols::{ProtocolDescriptor, ProtocolHandler};
use stemgate::toolhub::ToolHubConfig;
use stemgate::Agent;

struct Probe {
    hits: Arc<AtomicUsize>,
}

impl ProtocolHandler for Probe {
    fn descriptor(&self) -> ProtocolDescriptor {
        ProtocolDescriptor {
            name: "probe",
            version: "0.0.1",
            endpoints: vec!["GET /probe".into(), "GET /probe/panic".into()],
        }
    }

    fn routes(&self) -> Router {
        let hits = self.hits.clone();
        Router::new()
            .route(
                "/probe",
                get(move || {
                    hits.fetch_add(1, Ordering::SeqCst);
                    async { "reached" }
                }),
            )
            .route(
                "/probe/panic",
                get(|| async {
                    if true {
                        panic!("handler exploded");
                    }
                    "unreachable"
                }),
            )
    }
}

fn config() -> GatewayConfig {
    let mut cfg = GatewayConfig::default();
    cfg.agent.tools = ToolHubConfig::without_delays();
    cfg
}

async fn gateway(cfg: GatewayConfig) -> (Gateway, ManualClock) {
    let agent = Agent::new(cfg.agent.clone()).await.unwrap();
    let clock = ManualClock::default();
    let shared: SharedClock = Arc::new(clock.clone());
    (Gateway::new(cfg, agent, shared), clock)
}

async fn call(router: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Value) {
    let res = router.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, headers, body)
}

fn get_req(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn missing_credentials_never_reach_the_handler() {
    let hits = Arc::new(AtomicUsize::new(0));
    let cfg = GatewayConfig { api_keys: vec!["k1".into()], ..config() };
    let (gw, _) = gateway(cfg).await;
    let router = gw.with_handler(Arc::new(Probe { hits: hits.clone() })).router();

    let (status, _, body) = call(&router, get_req("/probe")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"]["code"], "unauthorized");
    let (status, _, _) =
        call(&router, Request::get("/probe").header("x-api-key", "wrong").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(hits.load(Ordering::SeqCst), 0);

    let (status, _, _) =
        call(&router, Request::get("/probe").header("x-api-key", "k1").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(hits.load(Ordering::SeqCst), 1);

    let (status, _, _) = call(&router, get_req("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _, _) = call(&router, get_req("/.well-known/agent.json")).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn rate_limit_returns_retry_after_and_refills() {
    let mut cfg = config();
    cfg.rate_limit.capacity = 2;
    cfg.rate_limit.refill_per_minute = 60;
    let (gw, clock) = gateway(cfg).await;
    let router = gw.router();
    for _ in 0..2 {
        assert_eq!(call(&router, get_req("/admin/skills")).await.0, StatusCode::OK);
    }
    let (status, headers, body) = call(&router, get_req("/admin/skills")).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    let retry: u64 = headers.get("retry-after").unwrap().to_str().unwrap().parse().unwrap();
    assert!(retry >= 1);
    assert_eq!(body["error"]["code"], "rate_limited");
    clock.advance(chrono::Duration::seconds(retry as i64));
    assert_eq!(call(&router, get_req("/admin/skills")).await.0, StatusCode::OK);
}

#[tokio::test]
async fn request_id_is_echoed_on_success_and_error() {
    let (gw, _) = gateway(config()).await;
    let router = gw.router();
    let req = Request::get("/nowhere").header("x-request-id", "abc-123").body(Body::empty()).unwrap();
    let (status, headers, body) = call(&router, req).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(headers.get("x-request-id").unwrap(), "abc-123");
    assert_eq!(body["error"]["correlation_id"], "abc-123");

    let (_, headers, _) = call(&router, get_req("/healthz")).await;
    let generated = headers.get("x-request-id").unwrap().to_str().unwrap();
    assert!(!generated.is_empty());

    let (status, _, body) = call(&router, Request::delete("/healthz").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(body["error"]["code"], "method_not_allowed");
}

#[tokio::test]
async fn panicking_handler_yields_500_and_service_survives() {
    let hits = Arc::new(AtomicUsize::new(0));
    let (gw, _) = gateway(config()).await;
    let router = gw.with_handler(Arc::new(Probe { hits })).router();
    let (status, _, body) = call(&router, get_req("/probe/panic")).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(body["error"]["code"], "internal");
    assert!(!body.to_string().contains("exploded"));
    assert_eq!(call(&router, get_req("/healthz")).await.0, StatusCode::OK);
    assert_eq!(call(&router, get_req("/probe")).await.0, StatusCode::OK);
}

#[tokio::test]
async fn agent_card_lists_protocols_and_is_stable() {
    let (a, _) = gateway(config()).await;
    let (b, _) = gateway(config()).await;
    let card = a.agent_card();
    let names: Vec<&str> = card["protocols"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["a2a", "ag-ui", "a2ui", "ucp", "ap2"]);
    assert_eq!(card, b.agent_card());
    let (_, _, served) = call(&a.router(), get_req("/.well-known/agent.json")).await;
    assert_eq!(served, card);
}

#[tokio::test]
async fn agent_card_includes_registered_plugins() {
    let (gw, _) = gateway(config()).await;
    let router = gw.router();
    let plugin = json!({
        "name": "quote",
        "trigger": { "intents": ["transaction"] },
        "action_sequence": [{ "tool": "price_quote", "arguments": { "input": "{{message}}" } }],
    });
    let req = Request::post("/admin/skills")
        .header("content-type", "application/json")
        .body(Body::from(plugin.to_string()))
        .unwrap();
    let (status, _, skill) = call(&router, req).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(skill["stage"], "committed");
    let (_, _, card) = call(&router, get_req("/.well-known/agent.json")).await;
    let skills = card["skills"].as_array().unwrap();
    assert!(skills.iter().any(|s| s["id"] == skill["id"] && s["origin"] == "plugin"));

    let bad = json!({ "trigger": {}, "action_sequence": [{ "tool": "teleport", "arguments": {} }] });
    let req = Request::post("/admin/skills")
        .header("content-type", "application/json")
        .body(Body::from(bad.to_string()))
        .unwrap();
    let (status, _, body) = call(&router, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"]["message"].as_str().unwrap().contains("teleport"));
}

#[tokio::test]
async fn served_gateway_answers_over_tcp_and_shuts_down() {
    let cfg = GatewayConfig { port: 0, ..config() };
    let (gw, _) = gateway(cfg).await;
    let handle = gw.serve().await.unwrap();
    let url = format!("http://{}/healthz", handle.addr());
    let body: Value = reqwest::get(&url).await.unwrap().json().await.unwrap();
    assert_eq!(body, json!({ "status": "ok" }));
    handle.shutdown().await.unwrap();
    assert!(reqwest::get(&url).await.is_err());
}
