//! HTTP gateway: mounts protocol handlers behind the shared middleware chain
//! correlation → CORS → auth → rate limit → panic containment → router.

pub mod admin;
pub mod clock;
pub mod error;
pub mod middleware;

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{middleware as mw, Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use middleware::{Principal, RequestContext};

use crate::cognition::{Agent, AgentConfig, PipelineError};
use crate::money::Money;
use crate::protocols::{self, ProtocolContext, ProtocolHandler};
use clock::{SharedClock, SystemClock};
use error::ApiError;

pub const CONFIG_ENV: &str = "STEMGATE_CONFIG";
pub const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimitConfig {
    pub capacity: u32,
    pub refill_per_minute: u32,
}

impl Default for RateLimitConfig {
    fn default() -> Self {
        Self { capacity: 60, refill_per_minute: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub bind: String,
    pub port: u16,
    pub api_keys: Vec<String>,
    pub jwt_secret: Option<String>,
    pub rate_limit: RateLimitConfig,
    pub ap2_auto_approve_threshold: Money,
    pub data_dir: Option<PathBuf>,
    pub cors_allow_origins: Vec<String>,
    pub idempotency_ttl_secs: u64,
    pub agent: AgentConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            api_keys: Vec::new(),
            jwt_secret: None,
            rate_limit: RateLimitConfig::default(),
            ap2_auto_approve_threshold: Money::from_minor(5000),
            data_dir: None,
            cors_allow_origins: Vec::new(),
            idempotency_ttl_secs: 86_400,
            agent: AgentConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl GatewayConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let config: GatewayConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.bind.parse::<IpAddr>().is_err() {
            return invalid(format!("bind {:?} is not an IP address", self.bind));
        }
        if self.rate_limit.capacity < 1 {
            return invalid("rate_limit.capacity must be at least 1".into());
        }
        if self.ap2_auto_approve_threshold.is_negative() {
            return invalid("ap2_auto_approve_threshold must not be negative".into());
        }
        if self.idempotency_ttl_secs == 0 {
            return invalid("idempotency_ttl_secs must be positive".into());
        }
        if self.api_keys.iter().any(|k| k.trim().is_empty()) {
            return invalid("api_keys must not contain blank keys".into());
        }
        if self.jwt_secret.as_deref().is_some_and(|s| s.is_empty()) {
            return invalid("jwt_secret must not be empty".into());
        }
        if let Some(o) = self.cors_allow_origins.iter().find(|o| HeaderValue::from_str(o).is_err()) {
            return invalid(format!("cors origin {o:?} is not a valid header value"));
        }
        Ok(())
    }

    /// The agent configuration with the gateway's data dir applied.
    pub fn agent_config(&self) -> AgentConfig {
        let mut agent = self.agent.clone();
        if self.data_dir.is_some() {
            agent.data_dir = self.data_dir.clone();
        }
        agent
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Agent(#[from] PipelineError),
}

pub struct Gateway {
    config: GatewayConfig,
    agent: Agent,
    clock: SharedClock,
    handlers: Vec<Arc<dyn ProtocolHandler>>,
}

impl Gateway {
    /// Builds the agent from the config, then the gateway around it.
    pub async fn from_config(config: GatewayConfig) -> Result<Gateway, GatewayError> {
        config.validate()?;
        let agent = Agent::new(config.agent_config()).await?;
        Ok(Gateway::new(config, agent, Arc::new(SystemClock)))
    }

    /// A gateway with the five built-in protocol handlers.
    pub fn new(config: GatewayConfig, agent: Agent, clock: SharedClock) -> Gateway {
        let ctx = ProtocolContext {
            agent: agent.clone(),
            clock: clock.clone(),
            ap2_auto_approve_threshold: config.ap2_auto_approve_threshold,
            idempotency_ttl: chrono::Duration::seconds(config.idempotency_ttl_secs.min(i64::MAX as u64) as i64),
        };
        let handlers = protocols::builtin(&ctx);
        Gateway { config, agent, clock, handlers }
    }

    pub fn with_handler(mut self, handler: Arc<dyn ProtocolHandler>) -> Gateway {
        self.handlers.push(handler);
        self
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn handlers(&self) -> &[Arc<dyn ProtocolHandler>] {
        &self.handlers
    }

    pub fn router(&self) -> Router {
        let card = Arc::new(self.card_source());
        let mut app = Router::new().route("/healthz", get(|| async { Json(json!({ "status": "ok" })) })).route(
            "/.well-known/agent.json",
            get(move || {
                let card = card.clone();
                async move { Json(card.render()) }
            }),
        );
        for h in &self.handlers {
            app = app.merge(h.routes());
        }
        let authenticator = Arc::new(middleware::Authenticator::new(
            &self.config.api_keys,
            self.config.jwt_secret.as_deref(),
            self.clock.clone(),
        ));
        let limiter = Arc::new(middleware::RateLimiter::new(
            self.config.rate_limit.capacity,
            self.config.rate_limit.refill_per_minute,
            self.clock.clone(),
        ));
        app.merge(admin::routes(self.agent.clone()))
            .fallback(|| async { ApiError::not_found("no such route") })
            .method_not_allowed_fallback(|| async {
                ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
            })
            .layer(CatchPanicLayer::custom(|_: Box<dyn std::any::Any + Send>| ApiError::internal().into_response()))
            .layer(mw::from_fn_with_state(limiter, middleware::rate_limit))
            .layer(mw::from_fn_with_state(authenticator, middleware::auth))
            .layer(self.cors())
            .layer(mw::from_fn(middleware::correlation))
    }

    fn cors(&self) -> CorsLayer {
        let origins: Vec<HeaderValue> =
            self.config.cors_allow_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(origins))
            .allow_methods([Method::GET, Method::POST, Method::DELETE])
            .allow_headers(Any)
            .expose_headers([axum::http::HeaderName::from_static(middleware::REQUEST_ID_HEADER)])
    }

    fn card_source(&self) -> CardSource {
        CardSource {
            agent: self.agent.clone(),
            url: format!("http://{}:{}", self.config.bind, self.config.port),
            protocols: self.handlers.iter().map(|h| json!(h.descriptor())).collect(),
        }
    }

    pub fn agent_card(&self) -> Value {
        self.card_source().render()
    }

    pub async fn serve(self) -> Result<ServerHandle, GatewayError> {
        let addr = format!("{}:{}", self.config.bind, self.config.port);
        let listener =
            TcpListener::bind(&addr).await.map_err(|source| GatewayError::Bind { addr: addr.clone(), source })?;
        let local = listener.local_addr().map_err(|source| GatewayError::Bind { addr, source })?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = self.router();
        let join = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        Ok(ServerHandle { addr: local, agent: self.agent, shutdown: Some(tx), join })
    }
}

struct CardSource {
    agent: Agent,
    url: String,
    protocols: Vec<Value>,
}

impl CardSource {
    fn render(&self) -> Value {
        let skills: Vec<Value> = self
            .agent
            .skills()
            .list()
            .into_iter()
            .map(|s| {
                json!({
                    "id": s.id,
                    "name": s.name,
                    "origin": s.origin,
                    "stage": s.stage,
                    "intents": s.trigger.intents,
                    "tools": s.action_sequence.iter().map(|c| c.tool.clone()).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "name": "stemgate",
            "description": "Adaptive multi-protocol agent with a deterministic cognitive pipeline",
            "version": env!("CARGO_PKG_VERSION"),
            "url": self.url,
            "protocols": self.protocols,
            "capabilities": {
                "streaming": true,
                "pushNotifications": false,
                "inputRequired": false,
                "stateTransitionHistory": true,
            },
            "defaultInputModes": ["text"],
            "defaultOutputModes": ["text"],
            "skills": skills,
            "endpoints": {
                "agent_card": format!("{}/.well-known/agent.json", self.url),
                "a2a": format!("{}/a2a", self.url),
                "ag_ui": format!("{}/ag-ui", self.url),
                "a2ui": format!("{}/a2ui/render", self.url),
                "ucp": format!("{}/ucp/sessions", self.url),
                "ap2": format!("{}/ap2", self.url),
                "admin": format!("{}/admin", self.url),
                "health": format!("{}/healthz", self.url),
            },
        })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    agent: Agent,
    shutdown: Option<oneshot::Sender<()>>,
    join: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    /// Stops accepting, then drains in-flight requests for up to 5 s.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match tokio::time::timeout(SHUTDOWN_GRACE, &mut self.join).await {
            Ok(Ok(result)) => result,
            Ok(Err(e)) => Err(std::io::Error::other(e)),
            Err(_) => {
                self.join.abort();
                Ok(())
            }
        }
    }
}
