//! Per-tool circuit breaker.
//!
//! Closed → Open when consecutive terminal failures reach the threshold.
//! Open → HalfOpen once the cool-down has elapsed; one probe is admitted.
//! HalfOpen → Closed on probe success, back to Open on probe failure.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD: u32 = 3;
pub const DEFAULT_COOLDOWN: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakerState {
    Closed,
    Open,
    HalfOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakerSnapshot {
    pub state: BreakerState,
    pub consecutive_failures: u32,
}

#[derive(Debug, Clone)]
pub struct CircuitBreaker {
    threshold: u32,
    cooldown: Duration,
    state: BreakerState,
    consecutive_failures: u32,
    opened_at: Option<Instant>,
    probe_in_flight: bool,
}

impl CircuitBreaker {
    pub fn new(threshold: u32, cooldown: Duration) -> Self {
        Self {
            threshold: threshold.max(1),
            cooldown,
            state: BreakerState::Closed,
            consecutive_failures: 0,
            opened_at: None,
            probe_in_flight: false,
        }
    }

    pub fn state(&self) -> BreakerState {
        self.state
    }

    pub fn snapshot(&self) -> BreakerSnapshot {
        BreakerSnapshot { state: self.state, consecutive_failures: self.consecutive_failures }
    }

    /// Whether a call may reach the provider at `now`.
    pub fn admit(&mut self, now: Instant) -> bool {
        match self.state {
            BreakerState::Closed => true,
            BreakerState::Open => {
                let elapsed = self.opened_at.map_or(Duration::MAX, |t| now.saturating_duration_since(t));
                if elapsed >= self.cooldown {
                    self.state = BreakerState::HalfOpen;
                    self.probe_in_flight = true;
                    true
                } else {
                    false
                }
            }
            BreakerState::HalfOpen => {
                if self.probe_in_flight {
                    false
                } else {
                    self.probe_in_flight = true;
                    true
                }
            }
        }
    }

    /// Records the terminal outcome of one admitted call.
    pub fn record(&mut self, success: bool, now: Instant) {
        self.probe_in_flight = false;
        if success {
            self.state = BreakerState::Closed;
            self.consecutive_failures = 0;
            self.opened_at = None;
            return;
        }
        self.consecutive_failures = self.consecutive_failures.saturating_add(1);
        let trips = match self.state {
            BreakerState::HalfOpen => true,
            _ => self.consecutive_failures >= self.threshold,
        };
        if trips {
            self.state = BreakerState::Open;
            self.opened_at = Some(now);
        }
    }
}

impl Default for CircuitBreaker {
    fn default() -> Self {
        Self::new(DEFAULT_THRESHOLD, DEFAULT_COOLDOWN)
    }
}
