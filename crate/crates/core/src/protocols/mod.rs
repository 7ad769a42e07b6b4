//! Protocol handlers. Each exposes its route table through
//! [`ProtocolHandler`]; the gateway mounts whatever it is given.

pub mod a2a;
pub mod a2ui;
pub mod agui;
pub mod ap2;
pub mod sse;
pub mod ucp;

use std::sync::Arc;

use axum::Router;
use serde::Serialize;

use crate::cognition::Agent;
use crate::gateway::clock::SharedClock;
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtocolDescriptor {
    pub name: &'static str,
    pub version: &'static str,
    pub endpoints: Vec<String>,
}

pub trait ProtocolHandler: Send + Sync {
    fn descriptor(&self) -> ProtocolDescriptor;
    fn routes(&self) -> Router;
}

/// Shared dependencies handed to protocol handlers at construction.
#[derive(Clone)]
pub struct ProtocolContext {
    pub agent: Agent,
    pub clock: SharedClock,
    pub ap2_auto_approve_threshold: Money,
    pub idempotency_ttl: chrono::Duration,
}

/// The five built-in handlers in the order they appear in the agent card.
pub fn builtin(ctx: &ProtocolContext) -> Vec<Arc<dyn ProtocolHandler>> {
    vec![
        Arc::new(a2a::A2aHandler::new(ctx.agent.clone(), ctx.clock.clone())),
        Arc::new(agui::AgUiHandler::new(ctx.agent.clone())),
        Arc::new(a2ui::A2uiHandler),
        Arc::new(ucp::UcpHandler::new(ctx.clock.clone(), ctx.idempotency_ttl)),
        Arc::new(ap2::Ap2Handler::new(ctx.clock.clone(), ctx.ap2_auto_approve_threshold)),
    ]
}

/// Caller id for a request: an explicit body field, else the principal.
pub(crate) fn caller_for(explicit: Option<&str>, principal: Option<&crate::gateway::Principal>) -> String {
    match explicit.map(str::trim).filter(|s| !s.is_empty()) {
        Some(id) => id.to_string(),
        None => principal.map_or_else(|| "anonymous".to_string(), |p| p.id.clone()),
    }
}
