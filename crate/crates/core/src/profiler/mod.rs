//! Per-caller preference learning and per-run behavior parameters.
//!
//! Dimension values move by an exponential moving average; confidence in a
//! profile grows as `n / (n + kappa)`. [`adapt`] blends the learned profile
//! with what the current message says, weighted by that confidence.

mod dimensions;
mod signals;
mod store;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::{Complexity, Perception};

pub use dimensions::{Category, Dimension};
pub use signals::extract_signals;
pub use store::ProfileStore;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_KAPPA: f64 = 10.0;
/// Value every dimension takes before any evidence.
pub const NEUTRAL: f64 = 0.5;

/// Evidence extracted from one interaction; only dimensions with evidence appear.
pub type Signals = BTreeMap<Dimension, f64>;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("{name} = {value} is outside {range}")]
    Range { name: &'static str, value: f64, range: &'static str },
    #[error("profile for {caller} is missing dimensions or has out-of-range values")]
    InvalidProfile { caller: String },
}

/// `(1 − alpha)·current + alpha·signal`.
pub fn update_dimension(current: f64, signal: f64, alpha: f64) -> Result<f64, ProfileError> {
    if !(0.0..=1.0).contains(&current) {
        return Err(ProfileError::Range { name: "current", value: current, range: "[0, 1]" });
    }
    if !(0.0..=1.0).contains(&signal) {
        return Err(ProfileError::Range { name: "signal", value: signal, range: "[0, 1]" });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ProfileError::Range { name: "alpha", value: alpha, range: "(0, 1)" });
    }
    Ok(((1.0 - alpha) * current + alpha * signal).clamp(0.0, 1.0))
}

/// Rational saturation curve `n / (n + kappa)`.
pub fn confidence(n: u64, kappa: f64) -> f64 {
    let n = n as f64;
    n / (n + kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilerConfig {
    pub alpha: f64,
    pub kappa: f64,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, kappa: DEFAULT_KAPPA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct CallerProfile {
    pub caller_id: String,
    pub dimensions: BTreeMap<Dimension, f64>,
    pub interaction_count: u64,
    pub last_updated: Option<DateTime<Utc>>,
}

#[derive(Deserialize)]
struct RawProfile {
    caller_id: String,
    dimensions: BTreeMap<Dimension, f64>,
    interaction_count: u64,
    last_updated: Option<DateTime<Utc>>,
}

impl TryFrom<RawProfile> for CallerProfile {
    type Error = ProfileError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        let complete =
            raw.dimensions.len() == Dimension::ALL.len() && raw.dimensions.values().all(|v| (0.0..=1.0).contains(v));
        if !complete {
            return Err(ProfileError::InvalidProfile { caller: raw.caller_id });
        }
        Ok(CallerProfile {
            caller_id: raw.caller_id,
            dimensions: raw.dimensions,
            interaction_count: raw.interaction_count,
            last_updated: raw.last_updated,
        })
    }
}

impl CallerProfile {
    pub fn fresh(caller_id: impl Into<String>) -> Self {
        Self {
            caller_id: caller_id.into(),
            dimensions: Dimension::ALL.iter().map(|d| (*d, NEUTRAL)).collect(),
            interaction_count: 0,
            last_updated: None,
        }
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        self.dimensions.get(&dim).copied().unwrap_or(NEUTRAL)
    }

    pub fn confidence(&self, kappa: f64) -> f64 {
        confidence(self.interaction_count, kappa)
    }
}

/// Applies one EMA step per signaled dimension and counts the interaction.
pub fn learn(profile: &CallerProfile, signals: &Signals, alpha: f64) -> CallerProfile {
    let mut next = profile.clone();
    for (dim, signal) in signals {
        let current = next.get(*dim);
        // signals are produced clamped; fall back to the old value on bad input
        let updated = update_dimension(current, signal.clamp(0.0, 1.0), alpha).unwrap_or(current);
        next.dimensions.insert(*dim, updated);
    }
    next.interaction_count += 1;
    next.last_updated = Some(Utc::now());
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorParameters {
    pub reasoning_depth: u32,
    pub exploration: f64,
    pub verbosity: f64,
    pub confidence_threshold: f64,
    pub tool_use_preference: f64,
    pub creativity: f64,
    pub proactive_suggestion: bool,
    pub self_reflection_every: u32,
    pub max_plan_steps: usize,
    pub memory_retrieval_breadth: usize,
}

impl Default for BehaviorParameters {
    fn default() -> Self {
        Self {
            reasoning_depth: 3,
            exploration: 0.3,
            verbosity: 0.5,
            confidence_threshold: 0.7,
            tool_use_preference: 0.5,
            creativity: 0.5,
            proactive_suggestion: true,
            self_reflection_every: 5,
            max_plan_steps: 10,
            memory_retrieval_breadth: 10,
        }
    }
}

/// One continuous parameter as a function of profile dimensions.
struct Mapping {
    inputs: &'static [Dimension],
    default: f64,
    f: fn(&dyn Fn(Dimension) -> f64) -> f64,
}

// A neutral profile (all 0.5) implies exactly the default of every parameter.
const EXPLORATION: Mapping =
    Mapping { inputs: &[Dimension::Innovation], default: 0.3, f: |d| 0.6 * d(Dimension::Innovation) };
const VERBOSITY: Mapping = Mapping { inputs: &[Dimension::Verbosity], default: 0.5, f: |d| d(Dimension::Verbosity) };
const CONFIDENCE_THRESHOLD: Mapping = Mapping {
    inputs: &[Dimension::CorrectnessOverSpeed],
    default: 0.7,
    f: |d| 0.5 + 0.4 * d(Dimension::CorrectnessOverSpeed),
};
const TOOL_USE: Mapping =
    Mapping { inputs: &[Dimension::ToolAffinity], default: 0.5, f: |d| d(Dimension::ToolAffinity) };
const CREATIVITY: Mapping = Mapping {
    inputs: &[Dimension::Innovation, Dimension::RiskTolerance],
    default: 0.5,
    f: |d| 0.5 * d(Dimension::Innovation) + 0.5 * d(Dimension::RiskTolerance),
};
const DETAIL: Mapping =
    Mapping { inputs: &[Dimension::DetailOrientation], default: 0.5, f: |d| d(Dimension::DetailOrientation) };
const CORRECTNESS: Mapping =
    Mapping { inputs: &[Dimension::CorrectnessOverSpeed], default: 0.5, f: |d| d(Dimension::CorrectnessOverSpeed) };
const DIRECTNESS: Mapping = Mapping { inputs: &[Dimension::Directness], default: 0.5, f: |d| d(Dimension::Directness) };
const FORMALITY: Mapping = Mapping { inputs: &[Dimension::Formality], default: 0.5, f: |d| d(Dimension::Formality) };

impl Mapping {
    /// `conf·profile_implied + (1 − conf)·signal_or_default`, clamped to [0, 1].
    fn blend(&self, profile: &CallerProfile, signals: &Signals, conf: f64) -> f64 {
        let from_profile = (self.f)(&|d| profile.get(d));
        let signaled = self.inputs.iter().any(|d| signals.contains_key(d));
        let from_message =
            if signaled { (self.f)(&|d| signals.get(&d).copied().unwrap_or(NEUTRAL)) } else { self.default };
        (conf * from_profile + (1.0 - conf) * from_message).clamp(0.0, 1.0)
    }
}

/// Phase 2: derive this run's parameters from the profile and the message.
pub fn adapt(
    profile: &CallerProfile,
    signals: &Signals,
    perception: &Perception,
    config: &ProfilerConfig,
) -> BehaviorParameters {
    let conf = profile.confidence(config.kappa);
    let depth = match perception.complexity {
        Complexity::Simple => 2,
        Complexity::Medium => 3,
        Complexity::Complex => 4,
    };
    let correctness = CORRECTNESS.blend(profile, signals, conf);
    let directness = DIRECTNESS.blend(profile, signals, conf);
    let detail = DETAIL.blend(profile, signals, conf);
    BehaviorParameters {
        reasoning_depth: u32::clamp(depth, 1, 5),
        exploration: EXPLORATION.blend(profile, signals, conf),
        verbosity: VERBOSITY.blend(profile, signals, conf),
        confidence_threshold: CONFIDENCE_THRESHOLD.blend(profile, signals, conf),
        tool_use_preference: TOOL_USE.blend(profile, signals, conf),
        creativity: CREATIVITY.blend(profile, signals, conf),
        proactive_suggestion: directness < 0.8,
        self_reflection_every: if correctness >= 0.8 { 3 } else { 5 },
        max_plan_steps: 10,
        memory_retrieval_breadth: (5.0 + 10.0 * detail).round().clamp(1.0, 20.0) as usize,
    }
}

/// Blended formality used to pick the response template.
pub fn response_formality(profile: &CallerProfile, signals: &Signals, config: &ProfilerConfig) -> f64 {
    FORMALITY.blend(profile, signals, profile.confidence(config.kappa))
}
