//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use parking_lot::Mutex;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use tower::ServiceExt;

use stemgate::cognition::{select_strategy, Strategy};
use stemgate::gateway::clock::{ManualClock, SharedClock};
use stemgate::gateway::{Gateway, GatewayConfig};
use stemgate::memory::{
    EpisodeDraft, MemoryConfig, MemoryManager, PerceptionSummary, SemanticStore, TripleSource, FREQUENTLY_REQUESTS,
};
use stemgate::money::Money;
use stemgate::perception::{Complexity, Intent, Perception};
use stemgate::profiler::{self, BehaviorParameters};
use stemgate::protocols::a2a::{TaskError, TaskMessage, TaskState, TaskStore};
use stemgate::protocols::ap2::{self, MandateStatus, NewIntent, PaymentStore};
use stemgate::protocols::ucp::{UcpHandler, REPLAY_HEADER, REQUIRED_HEADERS};
use stemgate::protocols::{agui, sse, ProtocolHandler};
use stemgate::skills::{OutcomeEffect, Skill, SkillError, SkillOrigin, SkillRegistry, Stage, Trigger};
use stemgate::toolhub::{
    BreakerState, ProviderError, ToolCall, ToolDescriptor, ToolError, ToolHub, ToolHubConfig, ToolProvider,
};
use stemgate::Agent;

const EMA_TOL: f64 = 1e-12;
const CONFIDENCE_TOL: f64 = 1e-12;
const LIFECYCLE_MAX_LEN: usize = 15;
const SHORTCUT_BUDGET: Duration = Duration::from_secs(5);
const MAX_ATTEMPTS: u32 = 3;
const BREAKER_SEQUENCES: usize = 1_000;
const UCP_CONCURRENCY: usize = 20;
const AP2_LIFECYCLES: usize = 500;
const AGUI_RUNS: usize = 200;
const MEMORY_INTERACTIONS: usize = 1_000;
const MEMORY_CAP: usize = 500;
const MEMORY_BUDGET: Duration = Duration::from_secs(30);
const SUITE_BUDGET: Duration = Duration::from_secs(60);

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)*));
        }
    }};
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn quiet_gateway_config() -> GatewayConfig {
    let mut cfg = GatewayConfig::default();
    cfg.rate_limit.capacity = 100_000;
    cfg.rate_limit.refill_per_minute = 100_000;
    cfg.agent.tools = ToolHubConfig::without_delays();
    cfg
}

async fn gateway_router() -> Router {
    let cfg = quiet_gateway_config();
    let agent = Agent::new(cfg.agent.clone()).await.expect("agent");
    let clock: SharedClock = Arc::new(ManualClock::default());
    Gateway::new(cfg, agent, clock).router()
}

async fn send(router: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let res = router.clone().oneshot(req).await.expect("infallible");
    let status = res.status();
    let headers = res.headers().clone();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.expect("body");
    (status, headers, bytes.to_vec())
}

fn post_json(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap()
}

// ---------------------------------------------------------------- profile math

fn ema_update_exactness() -> Outcome {
    let v = profiler::update_dimension(0.5, 1.0, 0.1).map_err(|e| e.to_string())?;
    ensure!((v - 0.55).abs() <= EMA_TOL, "update_dimension(0.5, 1.0, 0.1) = {v}");
    let grid = [0.0, 0.1, 0.25, 0.5, 0.73, 0.9, 1.0];
    for &v0 in &grid {
        for &s in &grid {
            let mut v = v0;
            for k in 1..=100 {
                v = profiler::update_dimension(v, s, 0.1).map_err(|e| e.to_string())?;
                let closed = 0.9f64.powi(k) * (v0 - s).abs();
                ensure!(
                    ((v - s).abs() - closed).abs() <= EMA_TOL,
                    "v0={v0} s={s} k={k}: |v-s|={} closed={closed}",
                    (v - s).abs()
                );
            }
        }
    }
    Ok(())
}

fn confidence_saturation() -> Outcome {
    let c10 = profiler::confidence(10, 10.0);
    ensure!(c10 == 0.5, "confidence(10) = {c10}");
    let c5 = profiler::confidence(5, 10.0);
    ensure!((c5 - 1.0 / 3.0).abs() <= CONFIDENCE_TOL, "confidence(5) = {c5}");
    let mut prev = profiler::confidence(0, 10.0);
    ensure!(prev == 0.0, "confidence(0) = {prev}");
    for n in 1..=10_000u64 {
        let c = profiler::confidence(n, 10.0);
        ensure!(c > prev && c < 1.0, "not monotone at n={n}: {prev} -> {c}");
        prev = c;
    }
    Ok(())
}

// ---------------------------------------------------------------- skill lifecycle

#[derive(Debug, Clone, Copy, PartialEq)]
enum Oracle {
    Alive { stage: Stage, successes: u64, activations: u64 },
    Removed,
}

/// Rule oracle in integer arithmetic: rate ≥ 0.6 ⇔ 5s ≥ 3a, rate < 0.3 ⇔ 10s < 3a.
fn oracle_step(origin: SkillOrigin, state: Oracle, success: bool) -> Oracle {
    let Oracle::Alive { stage, successes, activations } = state else { return Oracle::Removed };
    let a = activations + 1;
    let s = successes + u64::from(success);
    if origin == SkillOrigin::Crystallized && a >= 10 && 10 * s < 3 * a {
        return Oracle::Removed;
    }
    let healthy = 5 * s >= 3 * a;
    let stage = match stage {
        Stage::Progenitor if s >= 10 && healthy => Stage::Mature,
        Stage::Progenitor if s >= 3 && healthy => Stage::Committed,
        Stage::Committed if s >= 10 && healthy => Stage::Mature,
        other => other,
    };
    Oracle::Alive { stage, successes: s, activations: a }
}

fn seed_skill(origin: SkillOrigin) -> Skill {
    Skill {
        id: "sk_test".into(),
        name: None,
        origin,
        trigger: Trigger::default(),
        action_sequence: vec![ToolCall::new("search", json!({ "query": "{{message}}" }))],
        stage: if origin == SkillOrigin::Plugin { Stage::Committed } else { Stage::Progenitor },
        activations: 0,
        successes: 0,
        created_at: Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
        last_activated: None,
    }
}

fn lifecycle_dfs(
    origin: SkillOrigin,
    skill: &Skill,
    oracle: Oracle,
    depth: usize,
    path: &mut Vec<bool>,
    visited: &mut u64,
) -> Outcome {
    if depth == LIFECYCLE_MAX_LEN {
        return Ok(());
    }
    for success in [false, true] {
        path.push(success);
        *visited += 1;
        let registry = SkillRegistry::new();
        registry.insert(skill.clone());
        let effect = registry.record_outcome(&skill.id, success, Utc::now()).map_err(|e| e.to_string())?;
        let expected = oracle_step(origin, oracle, success);
        match (effect, expected) {
            (OutcomeEffect::Removed { .. }, Oracle::Removed) => {
                ensure!(registry.get(&skill.id).is_none(), "{origin:?} {path:?}: removed skill still listed");
                ensure!(
                    matches!(registry.record_outcome(&skill.id, true, Utc::now()), Err(SkillError::UnknownSkill(_))),
                    "{origin:?} {path:?}: removed skill accepted an outcome"
                );
            }
            (OutcomeEffect::Updated { skill: next }, Oracle::Alive { stage, successes, activations }) => {
                ensure!(
                    (next.stage, next.successes, next.activations) == (stage, successes, activations),
                    "{origin:?} {path:?}: got ({:?}, {}, {}), oracle ({stage:?}, {successes}, {activations})",
                    next.stage,
                    next.successes,
                    next.activations
                );
                lifecycle_dfs(origin, &next, expected, depth + 1, path, visited)?;
            }
            (got, want) => return Err(format!("{origin:?} {path:?}: got {got:?}, oracle {want:?}")),
        }
        path.pop();
    }
    Ok(())
}

fn skill_lifecycle_exhaustive() -> Outcome {
    for origin in [SkillOrigin::Crystallized, SkillOrigin::Plugin] {
        let skill = seed_skill(origin);
        let start = Oracle::Alive { stage: skill.stage, successes: 0, activations: 0 };
        let mut visited = 0;
        lifecycle_dfs(origin, &skill, start, 0, &mut Vec::new(), &mut visited)?;
        ensure!(visited > 0, "no sequences explored");
    }
    Ok(())
}

// ---------------------------------------------------------------- strategy

fn strategy_truth_table() -> Outcome {
    let params = BehaviorParameters::default();
    let mut cases = 0;
    for requires_tools in [false, true] {
        for complexity in Complexity::ALL {
            for intent in Intent::ALL {
                let p = Perception {
                    intent,
                    complexity,
                    entities: Vec::new(),
                    sentiment: 0.0,
                    urgency: 0.0,
                    has_code: false,
                    word_count: 5,
                    requires_tools,
                    domain_hints: Vec::new(),
                };
                let want = match (requires_tools, complexity, intent) {
                    (true, _, _) => Strategy::React,
                    (false, Complexity::Complex, _) => Strategy::Reflexion,
                    (false, _, Intent::Analysis) | (false, _, Intent::Creative) => Strategy::InternalDebate,
                    _ => Strategy::ChainOfThought,
                };
                let got = select_strategy(&p, &params);
                ensure!(got == want, "tools={requires_tools} {complexity:?} {intent:?}: got {got:?}, want {want:?}");
                cases += 1;
            }
        }
    }
    ensure!(cases == 60, "covered {cases} combinations");
    Ok(())
}

// ---------------------------------------------------------------- short-circuit

fn phases(result: &Value) -> Vec<String> {
    result["trace"]
        .as_array()
        .map(|t| t.iter().filter_map(|e| e["phase"].as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

fn skill_short_circuit() -> Outcome {
    let script = repo_root().join("scripts/sessions/skill_shortcut.json");
    let started = Instant::now();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_stemgate"))
        .args(["--json", "session", "run"])
        .arg(&script)
        .env_remove("STEMGATE_DATA_DIR")
        .output()
        .map_err(|e| format!("cannot launch CLI: {e}"))?;
    let elapsed = started.elapsed();
    ensure!(
        out.status.success(),
        "session run exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout)
    );
    ensure!(elapsed < SHORTCUT_BUDGET, "session run took {elapsed:?}");
    let report: Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("report is not JSON: {e}"))?;
    ensure!(report["passed"] == true, "report failures: {}", report["failures"]);
    let turns = report["turns"].as_array().ok_or("no turns")?;
    let last = turns.last().ok_or("empty script")?;
    ensure!(last["result"]["skill_shortcut_used"] == true, "final turn did not short-circuit");
    for t in turns {
        if t["result"]["skill_shortcut_used"] == true {
            let p = phases(&t["result"]);
            ensure!(!p.iter().any(|x| x == "reason" || x == "plan"), "turn {} shortcut trace {p:?}", t["turn"]);
        }
    }
    let committed = report["skills"]
        .as_array()
        .is_some_and(|s| s.iter().any(|k| k["stage"] == "committed" || k["stage"] == "mature"));
    ensure!(committed, "no skill reached committed");
    Ok(())
}

// ---------------------------------------------------------------- breaker and retries

/// Pops one scripted outcome per invocation; an exhausted script fails.
struct ScriptedProvider {
    script: Mutex<VecDeque<bool>>,
    calls: AtomicU32,
}

impl ScriptedProvider {
    fn new(outcomes: impl IntoIterator<Item = bool>) -> Arc<Self> {
        Arc::new(Self { script: Mutex::new(outcomes.into_iter().collect()), calls: AtomicU32::new(0) })
    }

    fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ToolProvider for ScriptedProvider {
    fn id(&self) -> &str {
        "scripted"
    }

    async fn list_tools(&self) -> Result<Vec<ToolDescriptor>, ProviderError> {
        Ok(vec![ToolDescriptor::simple("flaky", "scripted outcomes")])
    }

    async fn call(&self, _name: &str, _arguments: Value) -> Result<Value, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.script.lock().pop_front().unwrap_or(false) {
            Ok(json!("ok"))
        } else {
            Err(ProviderError::new("scripted failure"))
        }
    }
}

async fn scripted_hub(outcomes: Vec<bool>) -> Result<(ToolHub, Arc<ScriptedProvider>), String> {
    let hub = ToolHub::new(ToolHubConfig::without_delays());
    let provider = ScriptedProvider::new(outcomes);
    hub.register_provider(provider.clone()).await.map_err(|e| e.to_string())?;
    Ok((hub, provider))
}

#[derive(Debug, PartialEq)]
enum CallKind {
    Ok(u32),
    Failed(u32),
    Rejected,
}

/// Brute-force oracle: replays the whole history of terminal outcomes to
/// decide admission, then consumes scripted attempts.
fn breaker_oracle(script: &[bool], calls: usize) -> Vec<(CallKind, u32, BreakerState)> {
    let mut history: Vec<bool> = Vec::new();
    let mut cursor = 0;
    let mut out = Vec::new();
    let trailing = |h: &[bool]| h.iter().rev().take_while(|s| !**s).count() as u32;
    for _ in 0..calls {
        if trailing(&history) >= 3 {
            out.push((CallKind::Rejected, trailing(&history), BreakerState::Open));
            continue;
        }
        let mut attempts = 0;
        let mut ok = false;
        while attempts < MAX_ATTEMPTS {
            attempts += 1;
            let s = script.get(cursor).copied().unwrap_or(false);
            cursor += 1;
            if s {
                ok = true;
                break;
            }
        }
        history.push(ok);
        let failures = trailing(&history);
        let state = if failures >= 3 { BreakerState::Open } else { BreakerState::Closed };
        out.push((if ok { CallKind::Ok(attempts) } else { CallKind::Failed(attempts) }, failures, state));
    }
    out
}

async fn breaker_and_retries() -> Outcome {
    let (hub, provider) = scripted_hub(vec![false; 64]).await?;
    for call in 1..=3 {
        match hub.call_tool("flaky", json!({})).await {
            Err(ToolError::ToolFailed { attempts, .. }) => {
                ensure!(attempts == MAX_ATTEMPTS, "call {call}: {attempts} attempts")
            }
            other => return Err(format!("call {call}: expected ToolFailed, got {other:?}")),
        }
    }
    let before = provider.calls();
    ensure!(before == 3 * MAX_ATTEMPTS, "provider invoked {before} times over 3 calls");
    let fourth = hub.call_tool("flaky", json!({})).await;
    ensure!(matches!(fourth, Err(ToolError::BreakerOpen(_))), "4th call: {fourth:?}");
    ensure!(provider.calls() == before, "open breaker still invoked the provider");

    let (hub, provider) = scripted_hub(vec![false, false, true]).await?;
    let r = hub.call_tool("flaky", json!({})).await.map_err(|e| e.to_string())?;
    ensure!(r.attempts == 3 && provider.calls() == 3, "recovering call took {} attempts", r.attempts);
    ensure!(hub.breaker("flaky").consecutive_failures == 0, "success did not reset the counter");

    let mut rng = StdRng::seed_from_u64(0xB4EA);
    for seq in 0..BREAKER_SEQUENCES {
        let p: f64 = rng.gen_range(0.05..0.95);
        let len = rng.gen_range(1..60);
        let script: Vec<bool> = (0..len).map(|_| rng.gen_bool(p)).collect();
        let calls = rng.gen_range(1..25);
        let expected = breaker_oracle(&script, calls);
        let (hub, provider) = scripted_hub(script.clone()).await?;
        let mut invoked = 0;
        for (i, (want, failures, state)) in expected.into_iter().enumerate() {
            let got = match hub.call_tool("flaky", json!({})).await {
                Ok(r) => CallKind::Ok(r.attempts),
                Err(ToolError::ToolFailed { attempts, .. }) => CallKind::Failed(attempts),
                Err(ToolError::BreakerOpen(_)) => CallKind::Rejected,
                Err(e) => return Err(format!("sequence {seq} call {i}: {e}")),
            };
            invoked += match want {
                CallKind::Ok(a) | CallKind::Failed(a) => a,
                CallKind::Rejected => 0,
            };
            let snap = hub.breaker("flaky");
            ensure!(
                got == want && snap.consecutive_failures == failures && snap.state == state && provider.calls() == invoked,
                "sequence {seq} call {i} script {script:?}: got {got:?} {snap:?} ({} invocations), oracle {want:?} {failures} {state:?} ({invoked})",
                provider.calls()
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- UCP

fn ucp_request(missing: &[&str], body: &Value) -> Request<Body> {
    let mut b = Request::post("/ucp/sessions").header("content-type", "application/json");
    for (h, v) in REQUIRED_HEADERS.iter().zip(["idem-1", "req-1", "acceptance/1.0"]) {
        if !missing.contains(h) {
            b = b.header(*h, v);
        }
    }
    b.body(Body::from(body.to_string())).unwrap()
}

async fn ucp_idempotency() -> Outcome {
    let handler = UcpHandler::new(Arc::new(ManualClock::default()), chrono::Duration::hours(24));
    let router = handler.routes();
    let body = json!({
        "caller_id": "alice",
        "items": [{ "name": "widget", "quantity": 2, "unit_price": "4.20" }, { "name": "gadget", "quantity": 1, "unit_price": "4.20" }],
        "currency": "USD",
    });
    let mut tasks = Vec::new();
    for _ in 0..UCP_CONCURRENCY {
        let router = router.clone();
        let req = ucp_request(&[], &body);
        tasks.push(tokio::spawn(async move { send(&router, req).await }));
    }
    let mut ids = Vec::new();
    let mut created = 0;
    for t in tasks {
        let (status, headers, bytes) = t.await.map_err(|e| e.to_string())?;
        let v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        match status {
            StatusCode::CREATED => {
                created += 1;
                ensure!(headers.get(REPLAY_HEADER).is_none(), "fresh create flagged as replay");
            }
            StatusCode::OK => ensure!(headers.get(REPLAY_HEADER).is_some(), "replay missing {REPLAY_HEADER}"),
            s => return Err(format!("unexpected status {s}: {v}")),
        }
        ids.push(v["id"].as_str().unwrap_or_default().to_string());
    }
    ensure!(created == 1, "{created} responses were 201");
    ensure!(ids.iter().all(|i| !i.is_empty() && *i == ids[0]), "session ids differ: {ids:?}");
    ensure!(handler.store().len() == 1, "{} sessions stored", handler.store().len());

    for mask in 1u8..(1 << REQUIRED_HEADERS.len()) {
        let missing: Vec<&str> =
            REQUIRED_HEADERS.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, h)| *h).collect();
        let (status, _, bytes) = send(&router, ucp_request(&missing, &body)).await;
        ensure!(status == StatusCode::BAD_REQUEST, "missing {missing:?}: status {status}");
        let v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        let message = v["error"]["message"].as_str().unwrap_or_default();
        for h in REQUIRED_HEADERS {
            ensure!(message.contains(h) == missing.contains(&h), "missing {missing:?}: message {message:?}");
        }
    }
    ensure!(handler.store().len() == 1, "header-rejected requests created sessions");
    Ok(())
}

// ---------------------------------------------------------------- AP2

fn ap2_audit_replay_and_threshold() -> Outcome {
    let threshold = Money::from_minor(5_000);
    let mut rng = StdRng::seed_from_u64(0x0A92);
    let (mut executed, mut expired, mut failed) = (0, 0, 0);
    for life in 0..AP2_LIFECYCLES {
        let clock = ManualClock::default();
        let store = PaymentStore::new(Arc::new(clock.clone()), threshold);
        let max = Money::from_minor(rng.gen_range(1..20_000));
        let intent = store
            .create_intent(NewIntent {
                caller_id: "buyer",
                description: "acceptance",
                max_amount: max,
                currency: "USD",
                expires_at: Some(clock_now(&clock) + chrono::Duration::seconds(rng.gen_range(60..7_200))),
            })
            .map_err(|e| e.to_string())?;
        let mut mandates: Vec<String> = Vec::new();
        for _ in 0..rng.gen_range(1..12) {
            match rng.gen_range(0..10) {
                0..=3 => {
                    let amount = Money::from_minor(rng.gen_range(-10..25_000));
                    match store.create_mandate(&intent.id, amount, "card", "buyer") {
                        Ok(m) => mandates.push(m.id),
                        Err(ap2::Ap2Error::Expired(_)) => expired += 1,
                        Err(_) => {}
                    }
                }
                4..=5 if !mandates.is_empty() => {
                    let id = &mandates[rng.gen_range(0..mandates.len())];
                    let _ = store.decide(id, rng.gen_bool(0.7), "approver");
                }
                6..=8 if !mandates.is_empty() => {
                    let id = &mandates[rng.gen_range(0..mandates.len())];
                    match store.execute(id, rng.gen_bool(0.25), "buyer") {
                        Ok(_) => executed += 1,
                        Err(ap2::Ap2Error::ExecutionFailed(_)) => failed += 1,
                        Err(_) => {}
                    }
                }
                _ => clock.advance(chrono::Duration::seconds(rng.gen_range(1..1_800))),
            }
        }
        let audit = store.audit(&intent.id).map_err(|e| e.to_string())?;
        ensure!(
            audit.iter().enumerate().all(|(i, e)| e.seq == i as u64 + 1 && e.payload_digest == ap2::digest(&e.payload)),
            "lifecycle {life}: audit sequence or digests broken"
        );
        let replayed = ap2::replay(&audit).map_err(|e| format!("lifecycle {life}: replay failed: {e}"))?;
        let live = store.state(&intent.id).map_err(|e| e.to_string())?;
        ensure!(replayed == live, "lifecycle {life}: replay diverged\nreplay {replayed:?}\nlive {live:?}");
    }
    ensure!(
        executed > 0 && expired > 0 && failed > 0,
        "coverage: executed {executed}, expired {expired}, failed {failed}"
    );

    let clock = ManualClock::default();
    let store = PaymentStore::new(Arc::new(clock), threshold);
    let intent = store
        .create_intent(NewIntent {
            caller_id: "buyer",
            description: "boundary",
            max_amount: Money::from_minor(1_000_000),
            currency: "USD",
            expires_at: None,
        })
        .map_err(|e| e.to_string())?;
    for (delta, want) in [(-1, MandateStatus::Approved), (0, MandateStatus::Pending), (1, MandateStatus::Pending)] {
        let amount = Money::from_minor(threshold.minor() + delta);
        let m = store.create_mandate(&intent.id, amount, "card", "buyer").map_err(|e| e.to_string())?;
        ensure!(m.status == want, "amount {amount} (threshold {threshold}): {:?}", m.status);
    }
    Ok(())
}

fn clock_now(clock: &ManualClock) -> chrono::DateTime<Utc> {
    use stemgate::gateway::clock::Clock;
    clock.now()
}

// ---------------------------------------------------------------- AG-UI

const SUBJECTS: [&str; 8] =
    ["Paris", "the invoice", "widgets", "my garden", "the rust compiler", "42 * 17", "stock levels", "a poem"];
const VERBS: [&str; 9] = [
    "search",
    "summarize",
    "calculate",
    "analyze",
    "write",
    "explain",
    "quote the price of",
    "check inventory for",
    "compare",
];

fn random_message(rng: &mut StdRng) -> String {
    match rng.gen_range(0..12) {
        0 => "   ".into(),
        1 => "search the weather forecast for Paris".into(),
        _ => {
            let mut words = vec![VERBS[rng.gen_range(0..VERBS.len())], SUBJECTS[rng.gen_range(0..SUBJECTS.len())]];
            if rng.gen_bool(0.4) {
                words.push("and then");
                words.push(VERBS[rng.gen_range(0..VERBS.len())]);
                words.push(SUBJECTS[rng.gen_range(0..SUBJECTS.len())]);
            }
            if rng.gen_bool(0.2) {
                words.push("urgently, step by step, considering trade-offs in detail");
            }
            words.join(" ")
        }
    }
}

async fn agui_stream_grammar() -> Outcome {
    let router = gateway_router().await;
    let mut rng = StdRng::seed_from_u64(0xA6_01);
    let (mut with_tools, mut errored, mut shortcut) = (0, 0, 0);
    for run in 0..AGUI_RUNS {
        let message = random_message(&mut rng);
        let caller = format!("caller{}", rng.gen_range(0..4));
        let (status, _, bytes) =
            send(&router, post_json("/ag-ui", &json!({ "message": message, "caller_id": caller }))).await;
        ensure!(status == StatusCode::OK, "run {run}: status {status}");
        let events = sse::parse(&bytes).map_err(|e| format!("run {run}: framing: {e}"))?;
        let data: Vec<Value> = events.iter().map(|e| e.data.clone()).collect();
        for e in &events {
            ensure!(e.data["type"] == e.event.as_str(), "run {run}: event name {} vs type {}", e.event, e.data["type"]);
        }
        agui::check_stream(&data).map_err(|e| format!("run {run} ({message:?}): {e}"))?;
        ensure!(data.first().is_some_and(|d| d["type"] == "RUN_STARTED"), "run {run}: first event {:?}", data.first());
        let terminal = data.iter().filter(|d| d["type"] == "RUN_FINISHED" || d["type"] == "RUN_ERROR").count();
        ensure!(terminal == 1, "run {run}: {terminal} terminal events");
        with_tools += usize::from(data.iter().any(|d| d["type"] == "TOOL_CALL_START"));
        errored += usize::from(data.iter().any(|d| d["type"] == "RUN_ERROR"));
        shortcut += usize::from(data.iter().any(|d| d["result"]["skill_shortcut_used"] == true));
    }
    ensure!(
        with_tools > 0 && errored > 0 && shortcut > 0,
        "coverage: tools {with_tools}, errors {errored}, shortcuts {shortcut}"
    );
    Ok(())
}

// ---------------------------------------------------------------- A2A

fn transition_table(from: TaskState, to: TaskState) -> bool {
    use TaskState::*;
    matches!(
        (from, to),
        (Submitted, Working) | (Submitted, Canceled) | (Working, Completed) | (Working, Failed) | (Working, Canceled)
    )
}

async fn a2a_jsonrpc_and_task_states() -> Outcome {
    let router = gateway_router().await;
    let malformed = [
        json!({ "id": 1, "method": "tasks/send" }),
        json!({ "jsonrpc": "1.0", "id": 1, "method": "tasks/send" }),
        json!({ "jsonrpc": "2.0", "id": 1 }),
        json!({ "jsonrpc": "2.0", "id": 1, "method": 7 }),
        json!({ "jsonrpc": "2.0", "id": { "x": 1 }, "method": "tasks/get" }),
        json!({ "jsonrpc": "2.0", "id": 1, "method": "tasks/get", "params": "nope" }),
        json!("tasks/send"),
        json!([]),
    ];
    for body in &malformed {
        let (_, _, bytes) = send(&router, post_json("/a2a", body)).await;
        let v: Value = serde_json::from_slice(&bytes).map_err(|e| format!("{body}: {e}"))?;
        ensure!(v["error"]["code"] == -32600, "{body}: {v}");
        ensure!(v["jsonrpc"] == "2.0", "{body}: response envelope {v}");
    }
    for method in ["tasks/frobnicate", "Tasks/Send", ""] {
        let (_, _, bytes) =
            send(&router, post_json("/a2a", &json!({ "jsonrpc": "2.0", "id": 9, "method": method }))).await;
        let v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        ensure!(v["error"]["code"] == -32601 && v["id"] == 9, "method {method:?}: {v}");
    }

    let mut runner =
        TestRunner::new(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() });
    let op = (0usize..4, proptest::sample::select(TaskState::ALL.to_vec()));
    runner
        .run(&proptest::collection::vec(op, 0..40), |ops| {
            let store = TaskStore::new(Arc::new(ManualClock::default()));
            let mut model: HashMap<usize, (TaskState, usize)> = HashMap::new();
            for i in 0..4 {
                store.create(Some(format!("t{i}")), TaskMessage::text("user", "hi")).unwrap();
                model.insert(i, (TaskState::Submitted, 1));
            }
            for (i, to) in ops {
                let id = format!("t{i}");
                let (from, hist) = model[&i];
                let got = store.transition(&id, to, |_| {});
                if transition_table(from, to) {
                    let task = got.expect("legal transition rejected");
                    prop_assert_eq!(task.state, to);
                    model.insert(i, (to, hist + 1));
                } else {
                    match got {
                        Err(TaskError::Terminal { .. }) => prop_assert!(from.is_terminal()),
                        Err(TaskError::Illegal { .. }) => prop_assert!(!from.is_terminal()),
                        other => prop_assert!(false, "{:?} -> {:?} gave {:?}", from, to, other),
                    }
                }
                let task = store.get(&id).unwrap();
                prop_assert_eq!(task.state, model[&i].0);
                prop_assert_eq!(task.history.len(), model[&i].1);
                let legal = task.history.windows(2).all(|w| transition_table(w[0].state, w[1].state));
                prop_assert!(legal, "illegal history {:?}", task.history);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(())
}

// ---------------------------------------------------------------- memory

fn memory_bounded_growth() -> Outcome {
    let started = Instant::now();
    let config = MemoryConfig { episodic_cap: MEMORY_CAP, ..MemoryConfig::default() };
    let memory = MemoryManager::new(config);
    let mut rng = StdRng::seed_from_u64(0x3E3);
    let tools = ["search", "summarize", "calculator", "inventory", "price_quote"];
    let mut extracted_weight = 0u64;
    let mut checkpoints = 0;
    let mut merged = 0;
    for i in 0..MEMORY_INTERACTIONS {
        let intent = Intent::ALL[rng.gen_range(0..Intent::ALL.len())];
        let actions: Vec<ToolCall> = (0..rng.gen_range(0..3))
            .map(|_| ToolCall::new(tools[rng.gen_range(0..tools.len())], json!({ "query": "{{message}}" })))
            .collect();
        let draft = EpisodeDraft {
            caller_id: format!("user{}", rng.gen_range(0..8)),
            message: format!(
                "{} {} item {}",
                intent.as_str(),
                tools[rng.gen_range(0..tools.len())],
                rng.gen_range(0..200)
            ),
            perception: PerceptionSummary {
                intent,
                complexity: Complexity::ALL[rng.gen_range(0..3)],
                entity_kinds: Vec::new(),
                domain_hints: Vec::new(),
                urgency: rng.gen_range(0.0..1.0),
            },
            strategy: Some(Strategy::ALL[rng.gen_range(0..4)]),
            actions,
            success: rng.gen_bool(0.7),
        };
        let subject = ["Paris", "paris", " PARIS ", "Lyon"][rng.gen_range(0..4)];
        let object = ["mild weather", "Mild  Weather", "rain"][rng.gen_range(0..3)];
        memory.record_triple(subject, "has_forecast", object);
        extracted_weight += 1;
        let (_, report) = memory.record_episode(draft);
        let stats = memory.stats();
        ensure!(
            stats.episodes <= MEMORY_CAP + config.consolidate_every,
            "step {i}: {} episodes exceeds cap plus consolidation interval",
            stats.episodes
        );
        if let Some(r) = report {
            checkpoints += 1;
            merged += r.deduplicated;
            ensure!(stats.episodes <= MEMORY_CAP, "checkpoint at step {i}: {} episodes", stats.episodes);
            let weight: u64 =
                memory.triples().iter().filter(|t| t.predicate != FREQUENTLY_REQUESTS).map(|t| t.weight).sum();
            ensure!(weight == extracted_weight, "step {i}: triple weight {weight}, recorded {extracted_weight}");
        }
    }
    memory.consolidate();
    ensure!(memory.stats().episodes <= MEMORY_CAP, "final count {}", memory.stats().episodes);
    ensure!(checkpoints == MEMORY_INTERACTIONS / config.consolidate_every, "{checkpoints} checkpoints");
    ensure!(merged > 0, "dedup never merged anything");

    let mut store = SemanticStore::default();
    for _ in 0..2_000 {
        let s = ["Alice", "alice", "ALICE ", "bob"][rng.gen_range(0..4)];
        let o = ["likes  tea", "Likes Tea", "coffee"][rng.gen_range(0..3)];
        store.record(s, "prefers", o, TripleSource::Extracted, rng.gen_range(1..5));
        if rng.gen_bool(0.05) {
            let before = store.total_weight();
            store.deduplicate();
            ensure!(store.total_weight() == before, "dedup changed weight {before} -> {}", store.total_weight());
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < MEMORY_BUDGET, "memory stream took {elapsed:?}");
    Ok(())
}

// ---------------------------------------------------------------- wall clock

fn no_console_crate() -> Outcome {
    let crates = std::fs::read_dir(repo_root().join("crates")).map_err(|e| e.to_string())?;
    for entry in crates.flatten() {
        let name = entry.file_name().to_string_lossy().to_lowercase();
        ensure!(!name.contains("console"), "workspace contains {name}");
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    let suite_start = Instant::now();
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().expect("runtime");
    let mut results: Vec<(&str, Outcome, Duration)> = Vec::new();
    let mut record = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let elapsed = t.elapsed();
        match &outcome {
            Ok(()) => println!("PASS {name} ({:.2}s)", elapsed.as_secs_f64()),
            Err(e) => println!("FAIL {name} ({:.2}s): {e}", elapsed.as_secs_f64()),
        }
        results.push((name, outcome, elapsed));
    };
    record("ema-update-exactness", &mut ema_update_exactness);
    record("confidence-saturation", &mut confidence_saturation);
    record("skill-lifecycle-exhaustive", &mut skill_lifecycle_exhaustive);
    record("strategy-truth-table", &mut strategy_truth_table);
    record("skill-short-circuit", &mut skill_short_circuit);
    record("breaker-and-retries", &mut || runtime.block_on(breaker_and_retries()));
    record("ucp-idempotency", &mut || runtime.block_on(ucp_idempotency()));
    record("ap2-audit-replay-and-threshold", &mut ap2_audit_replay_and_threshold);
    record("agui-stream-grammar", &mut || runtime.block_on(agui_stream_grammar()));
    record("a2a-jsonrpc-and-task-states", &mut || runtime.block_on(a2a_jsonrpc_and_task_states()));
    record("memory-bounded-growth", &mut memory_bounded_growth);
    let total = suite_start.elapsed();
    let wall =
        no_console_crate().and_then(
            |()| {
                if total < SUITE_BUDGET {
                    Ok(())
                } else {
                    Err(format!("suite took {total:?}"))
                }
            },
        );
    record("primary-suite-wall-clock", &mut || wall.clone());
    let failed = results.iter().filter(|(_, o, _)| o.is_err()).count();
    println!("{} passed, {failed} failed, {:.2}s", results.len() - failed, suite_start.elapsed().as_secs_f64());
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
