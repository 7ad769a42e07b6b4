use std::sync::Arc;

use async_trait::async_trait;
use serde_json::Value;
use thiserror::Error;

use super::ToolDescriptor;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ProviderError(pub String);

impl ProviderError {
    pub fn new(message: impl Into<String>) -> Self {
        Self(message.into())
    }
}

/// A source of tools: in-process handlers, a subprocess, or anything else.
#[async_trait]
pub trait ToolProvider: Send + Sync {
    fn id(&self) -> &str;
    async fn list_tools(&self) -> Result<Vec<ToolDescriptor>, ProviderError>;
    async fn call(&self, name: &str, arguments: Value) -> Result<Value, ProviderError>;
}

pub type ToolHandler = Arc<dyn Fn(Value) -> Result<Value, ProviderError> + Send + Sync>;

/// Synchronous closures registered in-process.
#[derive(Clone)]
pub struct InProcessProvider {
    id: String,
    tools: Vec<(ToolDescriptor, ToolHandler)>,
}

impl InProcessProvider {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), tools: Vec::new() }
    }

    pub fn with_tool<F>(mut self, descriptor: ToolDescriptor, handler: F) -> Self
    where
        F: Fn(Value) -> Result<Value, ProviderError> + Send + Sync + 'static,
    {
        self.tools.push((descriptor, Arc::new(handler)));
        self
    }
}

#[async_trait]
impl ToolProvider for InProcessProvider {
    fn id(&self) -> &str {
        &self.id
    }

    async fn list_tools(&self) -> Result<Vec<ToolDescriptor>, ProviderError> {
        Ok(self.tools.iter().map(|(d, _)| d.clone()).collect())
    }

    async fn call(&self, name: &str, arguments: Value) -> Result<Value, ProviderError> {
        let (_, handler) = self
            .tools
            .iter()
            .find(|(d, _)| d.name == name)
            .ok_or_else(|| ProviderError::new(format!("no such tool: {name}")))?;
        handler(arguments)
    }
}
