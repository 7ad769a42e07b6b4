use std::collections::{BTreeMap, VecDeque};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

/// A new session starts after this much inactivity.
pub const SESSION_GAP_MINUTES: i64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub turns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub at: DateTime<Utc>,
    pub message: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserContext {
    pub caller_id: String,
    pub sessions: Vec<SessionRecord>,
    pub history: VecDeque<HistoryTurn>,
}

impl UserContext {
    fn new(caller_id: &str) -> Self {
        Self { caller_id: caller_id.to_string(), sessions: Vec::new(), history: VecDeque::new() }
    }
}

#[derive(Debug, Default)]
pub struct ContextStore {
    contexts: BTreeMap<String, UserContext>,
}

impl ContextStore {
    pub fn record_turn(&mut self, caller_id: &str, message: &str, response: &str, at: DateTime<Utc>, cap: usize) {
        let ctx = self.contexts.entry(caller_id.to_string()).or_insert_with(|| UserContext::new(caller_id));
        match ctx.sessions.last_mut() {
            Some(s) if at - s.end <= Duration::minutes(SESSION_GAP_MINUTES) => {
                s.end = at;
                s.turns += 1;
            }
            _ => ctx.sessions.push(SessionRecord { start: at, end: at, turns: 1 }),
        }
        ctx.history.push_back(HistoryTurn {
            at,
            message: crate::text::excerpt(message, 500),
            response: crate::text::excerpt(response, 500),
        });
        while ctx.history.len() > cap {
            ctx.history.pop_front();
        }
    }

    pub fn get(&self, caller_id: &str) -> Option<&UserContext> {
        self.contexts.get(caller_id)
    }

    pub fn remove(&mut self, caller_id: &str) -> bool {
        self.contexts.remove(caller_id).is_some()
    }

    pub fn insert(&mut self, ctx: UserContext) {
        self.contexts.insert(ctx.caller_id.clone(), ctx);
    }

    pub fn all(&self) -> impl Iterator<Item = &UserContext> {
        self.contexts.values()
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}
