use serde::{Deserialize, Serialize};
use serde_json::json;

use super::planning::MESSAGE_PLACEHOLDER;
use super::Strategy;
use crate::perception::{EntityKind, Intent, Perception};
use crate::profiler::BehaviorParameters;
use crate::text::tokenize;
use crate::toolhub::{ToolCall, ToolDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Thought,
    Action,
    Observation,
    Reflection,
    DebatePosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub kind: StepKind,
    pub text: String,
    /// Set on action steps only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<ToolCall>,
}

impl TraceStep {
    fn new(kind: StepKind, text: impl Into<String>) -> Self {
        Self { kind, text: text.into(), call: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub strategy: Strategy,
    pub steps: Vec<TraceStep>,
    pub depth: u32,
}

impl ReasoningTrace {
    pub fn actions(&self) -> impl Iterator<Item = &ToolCall> {
        self.steps.iter().filter_map(|s| s.call.as_ref())
    }

    pub fn count(&self, kind: StepKind) -> usize {
        self.steps.iter().filter(|s| s.kind == kind).count()
    }

    /// Text of the last thought, used as the answer when no tool runs.
    pub fn conclusion(&self) -> &str {
        self.steps
            .iter()
            .rev()
            .find(|s| s.kind == StepKind::Thought)
            .or(self.steps.last())
            .map_or("", |s| s.text.as_str())
    }

    pub fn max_len(depth: u32) -> usize {
        3 * depth as usize + 2
    }
}

fn topic(p: &Perception) -> String {
    if p.domain_hints.is_empty() {
        "the request".to_string()
    } else {
        p.domain_hints.iter().take(3).cloned().collect::<Vec<_>>().join(", ")
    }
}

fn entity_note(p: &Perception) -> String {
    if p.entities.is_empty() {
        "No specific entities were mentioned.".to_string()
    } else {
        let list: Vec<String> = p.entities.iter().map(|e| e.text.clone()).collect();
        format!("Key details to respect: {}.", list.join(", "))
    }
}

fn thought_templates(p: &Perception) -> Vec<String> {
    let topic = topic(p);
    vec![
        format!("Interpret the {} about {topic}.", p.intent.as_str().replace('_', " ")),
        entity_note(p),
        format!("Outline the points that matter most for {topic}."),
        "Check the outline against what was asked and drop anything off-topic.".to_string(),
        format!("Answer: a concise response about {topic}, covering the points above."),
    ]
}

/// `depth` thoughts; the last one is always the answer template.
fn thoughts(p: &Perception, depth: usize) -> Vec<String> {
    let mut all = thought_templates(p);
    let answer = all.pop().unwrap_or_default();
    let mut out: Vec<String> = all.into_iter().take(depth.saturating_sub(1)).collect();
    if depth > 0 {
        out.push(answer);
    }
    out
}

/// Token position of the first mention of `tool` (or its spaced form).
fn mentions(message: &str, tool: &str) -> Option<usize> {
    let tokens = tokenize(message);
    let parts: Vec<String> = tokenize(tool);
    if parts.is_empty() {
        return None;
    }
    if let Some(i) = tokens.iter().position(|t| t == tool) {
        return Some(i);
    }
    tokens.windows(parts.len()).position(|w| w == parts.as_slice())
}

/// Tool calls for a message: explicitly mentioned tools in message order,
/// then the intent's default chain. Summaries consume the preceding search.
pub fn tool_chain(message: &str, p: &Perception, tools: &[ToolDescriptor]) -> Vec<ToolCall> {
    let available = |name: &str| tools.iter().any(|t| t.name == name);
    let mut mentioned: Vec<(usize, &str)> =
        tools.iter().filter_map(|t| mentions(message, &t.name).map(|at| (at, t.name.as_str()))).collect();
    mentioned.sort();
    let mut names: Vec<&str> = mentioned.into_iter().map(|(_, n)| n).collect();
    let defaults: &[&str] = match p.intent {
        Intent::Search => &["search", "summarize"],
        Intent::Transaction => &["inventory", "price_quote"],
        _ if p.entities.iter().any(|e| e.kind == EntityKind::Amount) || has_arithmetic(message) => &["calculator"],
        _ => &[],
    };
    for d in defaults {
        if available(d) && !names.contains(d) {
            names.push(d);
        }
    }
    calls_for(&names)
}

/// Call templates for a tool sequence: each takes the message, except a
/// summary, which takes the output of the nearest earlier search.
pub fn calls_for<S: AsRef<str>>(names: &[S]) -> Vec<ToolCall> {
    let mut calls = Vec::new();
    for (i, name) in names.iter().map(AsRef::as_ref).enumerate() {
        let search = names[..i].iter().rposition(|n| n.as_ref() == "search");
        let input = match (name, search) {
            ("summarize", Some(j)) => format!("{{{{steps.s{}.output}}}}", j + 1),
            _ => MESSAGE_PLACEHOLDER.to_string(),
        };
        calls.push(ToolCall::new(name, json!({ "input": input })));
    }
    calls
}

fn has_arithmetic(message: &str) -> bool {
    let b = message.as_bytes();
    b.windows(3).any(|w| w[0].is_ascii_digit() && b"+-*/".contains(&w[1]) && w[2].is_ascii_digit())
        || b.windows(5).any(|w| {
            w[0].is_ascii_digit() && w[1] == b' ' && b"+-*/".contains(&w[2]) && w[3] == b' ' && w[4].is_ascii_digit()
        })
}

/// Deterministic stand-in for model reasoning under each strategy.
pub fn reason(
    message: &str,
    p: &Perception,
    params: &BehaviorParameters,
    strategy: Strategy,
    tools: &[ToolDescriptor],
) -> ReasoningTrace {
    let depth = params.reasoning_depth.max(1);
    let d = depth as usize;
    let mut steps = Vec::new();
    match strategy {
        Strategy::ChainOfThought => {
            steps.extend(thoughts(p, d).into_iter().map(|t| TraceStep::new(StepKind::Thought, t)));
        }
        Strategy::React => {
            let calls = tool_chain(message, p, tools);
            if calls.is_empty() {
                steps.push(TraceStep::new(StepKind::Thought, "No registered tool fits this request."));
            }
            for (i, call) in calls.into_iter().take(d).enumerate() {
                let description = tools
                    .iter()
                    .find(|t| t.name == call.tool)
                    .map(|t| t.description.to_lowercase())
                    .unwrap_or_default();
                steps.push(TraceStep::new(StepKind::Thought, format!("Use {} to {description}.", call.tool)));
                steps.push(TraceStep {
                    kind: StepKind::Action,
                    text: format!("{}({})", call.tool, call.arguments),
                    call: Some(call.clone()),
                });
                steps.push(TraceStep::new(
                    StepKind::Observation,
                    format!("The result of {} is available as steps.s{}.output.", call.tool, i + 1),
                ));
            }
            steps.push(TraceStep::new(StepKind::Thought, "Compose the answer from the tool results."));
        }
        Strategy::Reflexion => {
            let every = params.self_reflection_every.max(1) as usize;
            let topic = topic(p);
            for (i, t) in thoughts(p, d).into_iter().enumerate() {
                steps.push(TraceStep::new(StepKind::Thought, t));
                if (i + 1) % every == 0 && i + 1 < d {
                    steps.push(TraceStep::new(
                        StepKind::Reflection,
                        format!("Reflect: the reasoning so far stays on {topic}; continue."),
                    ));
                }
            }
            steps.push(TraceStep::new(
                StepKind::Reflection,
                format!("Reflect: the answer addresses {topic} and is consistent with the earlier steps."),
            ));
        }
        Strategy::InternalDebate => {
            let topic = topic(p);
            steps.push(TraceStep::new(
                StepKind::DebatePosition,
                format!("Position A: take the established, conservative view of {topic}."),
            ));
            steps.push(TraceStep::new(
                StepKind::DebatePosition,
                format!("Position B: challenge the usual assumptions about {topic}."),
            ));
            if params.creativity >= 0.6 && d >= 2 {
                steps.push(TraceStep::new(
                    StepKind::DebatePosition,
                    format!("Position C: combine both views into a new angle on {topic}."),
                ));
            }
            steps.push(TraceStep::new(
                StepKind::Thought,
                format!("Synthesis: weigh the positions and answer with a balanced view of {topic}."),
            ));
        }
    }
    steps.truncate(ReasoningTrace::max_len(depth));
    ReasoningTrace { strategy, steps, depth }
}
