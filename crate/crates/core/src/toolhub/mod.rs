//! Tool providers, the tool registry, and guarded tool invocation.
//!
//! Each call is attempted up to `1 + retries` times with fixed delays. Only the
//! terminal outcome of a call feeds the per-tool circuit breaker.

mod breaker;
pub mod demo;
mod executor;
mod provider;
pub mod stdio;
mod subprocess;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use breaker::{BreakerSnapshot, BreakerState, CircuitBreaker, DEFAULT_COOLDOWN, DEFAULT_THRESHOLD};
pub use executor::{ExecutionReport, StepObserver, StepReport, StepStatus};
pub use provider::{InProcessProvider, ProviderError, ToolHandler, ToolProvider};
pub use subprocess::SubprocessProvider;

/// Built-in pseudo tool: a plan step that only carries response text.
pub const RESPOND_TOOL: &str = "respond";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "inputSchema", default)]
    pub input_schema: Value,
    #[serde(default)]
    pub provider: String,
}

impl ToolDescriptor {
    /// Descriptor taking a single string `input` argument.
    pub fn simple(name: &str, description: &str) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            input_schema: serde_json::json!({
                "type": "object",
                "properties": { "input": { "type": "string" } },
                "required": ["input"]
            }),
            provider: String::new(),
        }
    }
}

/// A tool invocation (or template of one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub arguments: Value,
}

impl ToolCall {
    pub fn new(tool: impl Into<String>, arguments: Value) -> Self {
        Self { tool: tool.into(), arguments }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolCallResult {
    pub output: Value,
    pub attempts: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("tool {0} is already registered")]
    DuplicateTool(String),
    #[error("circuit breaker open for {0}")]
    BreakerOpen(String),
    #[error("tool {tool} failed after {attempts} attempts: {message}")]
    ToolFailed { tool: String, attempts: u32, message: String },
    #[error("provider error: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolHubConfig {
    /// One entry per retry; the length is the retry count.
    #[serde(with = "millis_vec")]
    pub retry_delays: Vec<Duration>,
    pub breaker_threshold: u32,
    #[serde(with = "millis")]
    pub breaker_cooldown: Duration,
    pub parallelism: usize,
}

impl Default for ToolHubConfig {
    fn default() -> Self {
        Self {
            retry_delays: vec![Duration::from_millis(100), Duration::from_millis(200)],
            breaker_threshold: DEFAULT_THRESHOLD,
            breaker_cooldown: DEFAULT_COOLDOWN,
            parallelism: 4,
        }
    }
}

impl ToolHubConfig {
    /// Same retry count, no waiting; for tests.
    pub fn without_delays() -> Self {
        Self { retry_delays: vec![Duration::ZERO; 2], ..Self::default() }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

mod millis_vec {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(v: &[Duration], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|d| d.as_millis() as u64))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Duration>, D::Error> {
        Ok(Vec::<u64>::deserialize(d)?.into_iter().map(Duration::from_millis).collect())
    }
}

struct Registered {
    descriptor: ToolDescriptor,
    provider: usize,
}

pub struct ToolHub {
    config: ToolHubConfig,
    providers: RwLock<Vec<Arc<dyn ToolProvider>>>,
    tools: RwLock<Vec<Registered>>,
    breakers: Mutex<HashMap<String, CircuitBreaker>>,
}

impl std::fmt::Debug for ToolHub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolHub")
            .field("config", &self.config)
            .field("tools", &self.list_tools().iter().map(|t| t.name.clone()).collect::<Vec<_>>())
            .finish()
    }
}

impl Default for ToolHub {
    fn default() -> Self {
        Self::new(ToolHubConfig::default())
    }
}

impl ToolHub {
    pub fn new(config: ToolHubConfig) -> Self {
        Self {
            config,
            providers: RwLock::new(Vec::new()),
            tools: RwLock::new(Vec::new()),
            breakers: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ToolHubConfig {
        &self.config
    }

    /// Registers every tool of `provider`, or none of them if any name clashes.
    pub async fn register_provider(&self, provider: Arc<dyn ToolProvider>) -> Result<(), ToolError> {
        let mut listed = provider.list_tools().await.map_err(|e| ToolError::Provider(e.to_string()))?;
        listed.sort_by(|a, b| a.name.cmp(&b.name));
        let mut tools = self.tools.write();
        for (i, d) in listed.iter().enumerate() {
            let clash = d.name == RESPOND_TOOL
                || tools.iter().any(|t| t.descriptor.name == d.name)
                || listed[..i].iter().any(|o| o.name == d.name);
            if clash {
                return Err(ToolError::DuplicateTool(d.name.clone()));
            }
        }
        let mut providers = self.providers.write();
        let index = providers.len();
        let provider_id = provider.id().to_string();
        providers.push(provider);
        for mut descriptor in listed {
            descriptor.provider = provider_id.clone();
            tools.push(Registered { descriptor, provider: index });
        }
        Ok(())
    }

    /// Provider registration order, then name.
    pub fn list_tools(&self) -> Vec<ToolDescriptor> {
        self.tools.read().iter().map(|t| t.descriptor.clone()).collect()
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.tools.read().iter().map(|t| t.descriptor.name.clone()).collect()
    }

    pub fn has_tool(&self, name: &str) -> bool {
        self.tools.read().iter().any(|t| t.descriptor.name == name)
    }

    pub fn breaker(&self, name: &str) -> BreakerSnapshot {
        self.breakers
            .lock()
            .get(name)
            .map(CircuitBreaker::snapshot)
            .unwrap_or(BreakerSnapshot { state: BreakerState::Closed, consecutive_failures: 0 })
    }

    fn with_breaker<R>(&self, name: &str, f: impl FnOnce(&mut CircuitBreaker) -> R) -> R {
        let mut breakers = self.breakers.lock();
        let b = breakers
            .entry(name.to_string())
            .or_insert_with(|| CircuitBreaker::new(self.config.breaker_threshold, self.config.breaker_cooldown));
        f(b)
    }

    /// Invokes a tool with retries behind its circuit breaker.
    pub async fn call_tool(&self, name: &str, arguments: Value) -> Result<ToolCallResult, ToolError> {
        let provider = {
            let tools = self.tools.read();
            let Some(t) = tools.iter().find(|t| t.descriptor.name == name) else {
                return Err(ToolError::UnknownTool(name.to_string()));
            };
            self.providers.read()[t.provider].clone()
        };
        if !self.with_breaker(name, |b| b.admit(Instant::now())) {
            return Err(ToolError::BreakerOpen(name.to_string()));
        }
        let mut attempts = 0u32;
        let mut last_error = String::new();
        for attempt in 0..=self.config.retry_delays.len() {
            attempts += 1;
            match provider.call(name, arguments.clone()).await {
                Ok(output) => {
                    self.with_breaker(name, |b| b.record(true, Instant::now()));
                    return Ok(ToolCallResult { output, attempts });
                }
                Err(e) => {
                    tracing::debug!(tool = name, attempt = attempts, error = %e, "tool attempt failed");
                    last_error = e.to_string();
                    if let Some(delay) = self.config.retry_delays.get(attempt) {
                        if !delay.is_zero() {
                            tokio::time::sleep(*delay).await;
                        }
                    }
                }
            }
        }
        self.with_breaker(name, |b| b.record(false, Instant::now()));
        Err(ToolError::ToolFailed { tool: name.to_string(), attempts, message: last_error })
    }
}

/// Text view of a tool output: its `text` field, the string itself, or compact JSON.
pub fn output_text(output: &Value) -> String {
    match output {
        Value::String(s) => s.clone(),
        Value::Object(map) => match map.get("text") {
            Some(Value::String(s)) => s.clone(),
            _ => output.to_string(),
        },
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn provider(id: &str, names: &[&str]) -> Arc<dyn ToolProvider> {
        let mut p = InProcessProvider::new(id);
        for n in names {
            p = p.with_tool(ToolDescriptor::simple(n, "test"), Ok);
        }
        Arc::new(p)
    }

    #[tokio::test]
    async fn empty_hub_lists_nothing() {
        assert!(ToolHub::default().list_tools().is_empty());
    }

    #[tokio::test]
    async fn duplicate_names_reject_the_second_provider() {
        let hub = ToolHub::default();
        hub.register_provider(provider("a", &["zeta", "alpha"])).await.unwrap();
        let err = hub.register_provider(provider("b", &["beta", "alpha"])).await.unwrap_err();
        assert_eq!(err, ToolError::DuplicateTool("alpha".into()));
        hub.register_provider(provider("c", &["gamma"])).await.unwrap();
        let names: Vec<String> = hub.list_tools().into_iter().map(|t| t.name).collect();
        assert_eq!(names, vec!["alpha", "zeta", "gamma"]);
        assert_eq!(hub.list_tools()[2].provider, "c");
    }

    #[tokio::test]
    async fn unknown_tool() {
        let hub = ToolHub::default();
        assert_eq!(hub.call_tool("nope", json!({})).await, Err(ToolError::UnknownTool("nope".into())));
    }

    #[tokio::test]
    async fn default_retries_back_off_100_then_200_ms() {
        let hub = ToolHub::new(ToolHubConfig::default());
        let failing = InProcessProvider::new("f")
            .with_tool(ToolDescriptor::simple("flaky", "test"), |_| Err(ProviderError::new("down")));
        hub.register_provider(Arc::new(failing)).await.unwrap();
        let started = std::time::Instant::now();
        let err = hub.call_tool("flaky", json!({})).await.unwrap_err();
        let elapsed = started.elapsed();
        assert!(matches!(err, ToolError::ToolFailed { attempts: 3, .. }), "{err:?}");
        assert!(elapsed >= Duration::from_millis(300), "{elapsed:?}");
        assert!(elapsed < Duration::from_millis(2000), "{elapsed:?}");
    }

    #[test]
    fn output_text_views() {
        assert_eq!(output_text(&json!({"text": "hi", "n": 1})), "hi");
        assert_eq!(output_text(&json!("raw")), "raw");
        assert_eq!(output_text(&json!({"n": 1})), "{\"n\":1}");
    }

    #[test]
    fn config_json_is_in_millis() {
        let cfg: ToolHubConfig = serde_json::from_value(json!({"retry_delays": [5, 10]})).unwrap();
        assert_eq!(cfg.retry_delays, vec![Duration::from_millis(5), Duration::from_millis(10)]);
        assert_eq!(cfg.breaker_threshold, 3);
    }
}
