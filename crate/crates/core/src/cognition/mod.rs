//! Strategy selection, template-driven reasoning, planning, response
//! formatting and the pipeline that ties the phases together.

mod format;
mod pipeline;
mod planning;
mod reasoning;

use serde::{Deserialize, Serialize};

use crate::perception::{Complexity, Intent, Perception};
use crate::profiler::BehaviorParameters;

pub use format::format_response;
pub use pipeline::{
    Agent, AgentConfig, ForgetReport, LearnObserver, Phase, PhaseEntry, PipelineError, PipelineEvent, PipelineResult,
};
pub use planning::{
    plan, references, substitute_message, substitute_outputs, templatize_message, Plan, PlanError, PlanSource,
    PlanStep, MESSAGE_PLACEHOLDER,
};
pub use reasoning::{calls_for, reason, tool_chain, ReasoningTrace, StepKind, TraceStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ChainOfThought,
    React,
    Reflexion,
    InternalDebate,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::ChainOfThought, Strategy::React, Strategy::Reflexion, Strategy::InternalDebate];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ChainOfThought => "chain_of_thought",
            Strategy::React => "react",
            Strategy::Reflexion => "reflexion",
            Strategy::InternalDebate => "internal_debate",
        }
    }
}

/// Tools first, then complexity, then intent; chain-of-thought otherwise.
pub fn select_strategy(p: &Perception, _params: &BehaviorParameters) -> Strategy {
    if p.requires_tools {
        Strategy::React
    } else if p.complexity == Complexity::Complex {
        Strategy::Reflexion
    } else if matches!(p.intent, Intent::Analysis | Intent::Creative) {
        Strategy::InternalDebate
    } else {
        Strategy::ChainOfThought
    }
}
