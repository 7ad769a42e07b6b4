use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::ReasoningTrace;
use crate::perception::Perception;
use crate::profiler::BehaviorParameters;
use crate::toolhub::{ToolCall, ToolDescriptor, RESPOND_TOOL};

static STEP_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{steps\.([A-Za-z0-9_-]+)\.output\}\}").unwrap());

pub const MESSAGE_PLACEHOLDER: &str = "{{message}}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    Reasoned,
    SkillShortcut,
    ProcedureReuse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub id: String,
    pub tool: String,
    pub arguments: Value,
    pub depends_on: BTreeSet<String>,
}

impl PlanStep {
    /// Dependencies are read off the `{{steps.<id>.output}}` references.
    pub fn new(id: impl Into<String>, tool: impl Into<String>, arguments: Value) -> Self {
        let depends_on = references(&arguments);
        Self { id: id.into(), tool: tool.into(), arguments, depends_on }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub source: PlanSource,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("the request needs tools but none are registered")]
    NoApplicableTools,
    #[error("step {step} depends on unknown step {missing}")]
    UnknownDependency { step: String, missing: String },
    #[error("dependency cycle through step {0}")]
    Cycle(String),
    #[error("duplicate step id {0}")]
    DuplicateId(String),
    #[error("plan has {len} steps, limit is {max}")]
    TooLong { len: usize, max: usize },
}

fn visit_strings(v: &Value, f: &mut impl FnMut(&str)) {
    match v {
        Value::String(s) => f(s),
        Value::Array(a) => a.iter().for_each(|x| visit_strings(x, f)),
        Value::Object(m) => m.values().for_each(|x| visit_strings(x, f)),
        _ => {}
    }
}

fn map_strings(v: &Value, f: &impl Fn(&str) -> String) -> Value {
    match v {
        Value::String(s) => Value::String(f(s)),
        Value::Array(a) => Value::Array(a.iter().map(|x| map_strings(x, f)).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), map_strings(x, f))).collect()),
        other => other.clone(),
    }
}

pub fn references(arguments: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    visit_strings(arguments, &mut |s| {
        out.extend(STEP_REF.captures_iter(s).map(|c| c[1].to_string()));
    });
    out
}

/// Replaces `{{steps.<id>.output}}` with known outputs; unknown ids stay.
pub fn substitute_outputs(arguments: &Value, outputs: &HashMap<String, String>) -> Value {
    map_strings(arguments, &|s| {
        STEP_REF
            .replace_all(s, |c: &regex::Captures| outputs.get(&c[1]).cloned().unwrap_or_else(|| c[0].to_string()))
            .into_owned()
    })
}

pub fn substitute_message(arguments: &Value, message: &str) -> Value {
    map_strings(arguments, &|s| s.replace(MESSAGE_PLACEHOLDER, message))
}

/// Inverse of [`substitute_message`] for strings equal to the message.
pub fn templatize_message(arguments: &Value, message: &str) -> Value {
    map_strings(arguments, &|s| if s == message { MESSAGE_PLACEHOLDER.to_string() } else { s.to_string() })
}

fn rename_refs(arguments: &Value, renames: &HashMap<String, String>) -> Value {
    map_strings(arguments, &|s| {
        STEP_REF
            .replace_all(s, |c: &regex::Captures| match renames.get(&c[1]) {
                Some(new) => format!("{{{{steps.{new}.output}}}}"),
                None => c[0].to_string(),
            })
            .into_owned()
    })
}

impl Plan {
    /// A plan from call templates whose references use positional ids `s1..`.
    /// Identical calls collapse onto their first occurrence; calls to
    /// unavailable tools are dropped; the result is cut at `max_steps`.
    pub fn from_calls(
        calls: &[ToolCall],
        message: &str,
        available: &dyn Fn(&str) -> bool,
        max_steps: usize,
        source: PlanSource,
    ) -> Plan {
        let mut renames: HashMap<String, String> = HashMap::new();
        let mut kept: Vec<(ToolCall, String)> = Vec::new();
        for (i, call) in calls.iter().enumerate() {
            let old = format!("s{}", i + 1);
            if !available(&call.tool) {
                continue;
            }
            let template = rename_refs(&call.arguments, &renames);
            if let Some((_, id)) = kept.iter().find(|(c, _)| c.tool == call.tool && c.arguments == template) {
                renames.insert(old, id.clone());
                continue;
            }
            let id = format!("s{}", kept.len() + 1);
            renames.insert(old, id.clone());
            kept.push((ToolCall::new(call.tool.clone(), template), id));
        }
        kept.truncate(max_steps);
        let ids: BTreeSet<String> = kept.iter().map(|(_, id)| id.clone()).collect();
        // edges come from the template, so text inside the message cannot add any
        let steps = kept
            .into_iter()
            .filter_map(|(call, id)| {
                let depends_on = references(&call.arguments);
                let arguments = substitute_message(&call.arguments, message);
                // a reference to a dropped step cannot be satisfied
                depends_on.is_subset(&ids).then_some(PlanStep { id, tool: call.tool, arguments, depends_on })
            })
            .collect();
        Plan { steps, source }
    }

    pub fn respond(text: &str, source: PlanSource) -> Plan {
        let step = PlanStep {
            id: "s1".into(),
            tool: RESPOND_TOOL.into(),
            arguments: json!({ "text": text }),
            depends_on: BTreeSet::new(),
        };
        Plan { steps: vec![step], source }
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.steps.iter().filter(|s| s.tool != RESPOND_TOOL).map(|s| s.tool.clone()).collect()
    }

    /// Checks ids, references, length and acyclicity (Kahn's algorithm).
    pub fn validate(&self, max_steps: usize) -> Result<(), PlanError> {
        if self.steps.len() > max_steps {
            return Err(PlanError::TooLong { len: self.steps.len(), max: max_steps });
        }
        let mut index = HashMap::new();
        for (i, s) in self.steps.iter().enumerate() {
            if index.insert(s.id.as_str(), i).is_some() {
                return Err(PlanError::DuplicateId(s.id.clone()));
            }
        }
        let mut indegree = vec![0usize; self.steps.len()];
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); self.steps.len()];
        for (i, s) in self.steps.iter().enumerate() {
            for d in &s.depends_on {
                let Some(&j) = index.get(d.as_str()) else {
                    return Err(PlanError::UnknownDependency { step: s.id.clone(), missing: d.clone() });
                };
                indegree[i] += 1;
                dependents[j].push(i);
            }
        }
        let mut ready: Vec<usize> = (0..self.steps.len()).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = ready.pop() {
            seen += 1;
            for &k in &dependents[i] {
                indegree[k] -= 1;
                if indegree[k] == 0 {
                    ready.push(k);
                }
            }
        }
        match (0..self.steps.len()).find(|&i| indegree[i] > 0) {
            Some(i) if seen < self.steps.len() => Err(PlanError::Cycle(self.steps[i].id.clone())),
            _ => Ok(()),
        }
    }
}

/// Phase 5: turn the trace's actions into an executable plan.
pub fn plan(
    trace: &ReasoningTrace,
    message: &str,
    perception: &Perception,
    tools: &[ToolDescriptor],
    params: &BehaviorParameters,
) -> Result<Plan, PlanError> {
    if perception.requires_tools && tools.is_empty() {
        return Err(PlanError::NoApplicableTools);
    }
    let calls: Vec<ToolCall> = trace.actions().cloned().collect();
    let available = |name: &str| tools.iter().any(|t| t.name == name);
    let plan = Plan::from_calls(&calls, message, &available, params.max_plan_steps, PlanSource::Reasoned);
    if plan.steps.is_empty() {
        return Ok(Plan::respond(trace.conclusion(), PlanSource::Reasoned));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognition::{StepKind, Strategy, TraceStep};
    use crate::perception::{perceive, Metadata};

    fn trace_with(calls: Vec<ToolCall>) -> ReasoningTrace {
        let steps = calls
            .into_iter()
            .map(|c| TraceStep { kind: StepKind::Action, text: c.tool.clone(), call: Some(c) })
            .collect();
        ReasoningTrace { strategy: Strategy::React, steps, depth: 3 }
    }

    fn tools(names: &[&str]) -> Vec<ToolDescriptor> {
        names.iter().map(|n| ToolDescriptor::simple(n, "t")).collect()
    }

    #[test]
    fn no_actions_gives_respond_step() {
        let p = perceive("hello", &Metadata::new()).unwrap();
        let t = ReasoningTrace {
            strategy: Strategy::ChainOfThought,
            steps: vec![TraceStep { kind: StepKind::Thought, text: "Answer: hi".into(), call: None }],
            depth: 1,
        };
        let plan = plan(&t, "hello", &p, &[], &BehaviorParameters::default()).unwrap();
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.steps[0].tool, RESPOND_TOOL);
        assert_eq!(plan.steps[0].arguments["text"], "Answer: hi");
    }

    #[test]
    fn independent_actions_have_no_edges() {
        let p = perceive("buy a lamp", &Metadata::new()).unwrap();
        let t = trace_with(vec![
            ToolCall::new("inventory", json!({"input": "lamp"})),
            ToolCall::new("price_quote", json!({"input": "lamp"})),
        ]);
        let plan = plan(&t, "buy a lamp", &p, &tools(&["inventory", "price_quote"]), &Default::default()).unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert!(plan.steps.iter().all(|s| s.depends_on.is_empty()));
    }

    #[test]
    fn placeholder_creates_edge() {
        let step = PlanStep::new("s2", "summarize", json!({"input": "{{steps.s1.output}}"}));
        assert_eq!(step.depends_on, BTreeSet::from(["s1".to_string()]));
    }

    #[test]
    fn truncates_at_max_steps() {
        let p = perceive("search everything", &Metadata::new()).unwrap();
        let calls = (0..12).map(|i| ToolCall::new("search", json!({"input": format!("q{i}")}))).collect();
        let plan = plan(&trace_with(calls), "m", &p, &tools(&["search"]), &Default::default()).unwrap();
        assert_eq!(plan.steps.len(), 10);
        plan.validate(10).unwrap();
    }

    #[test]
    fn no_tools_when_required() {
        let p = perceive("buy a lamp", &Metadata::new()).unwrap();
        assert!(p.requires_tools);
        let err = plan(&trace_with(vec![]), "buy a lamp", &p, &[], &Default::default()).unwrap_err();
        assert_eq!(err, PlanError::NoApplicableTools);
    }

    #[test]
    fn duplicates_collapse_and_references_follow() {
        let calls = vec![
            ToolCall::new("search", json!({"input": "{{message}}"})),
            ToolCall::new("search", json!({"input": "{{message}}"})),
            ToolCall::new("summarize", json!({"input": "{{steps.s2.output}}"})),
        ];
        let plan = Plan::from_calls(&calls, "weather", &|_| true, 10, PlanSource::SkillShortcut);
        assert_eq!(plan.steps.len(), 2);
        assert_eq!(plan.steps[0].arguments["input"], "weather");
        assert_eq!(plan.steps[1].arguments["input"], "{{steps.s1.output}}");
        plan.validate(10).unwrap();
    }

    #[test]
    fn validate_rejects_cycles_and_dangling() {
        let cyc = Plan {
            steps: vec![
                PlanStep::new("a", "t", json!({"x": "{{steps.b.output}}"})),
                PlanStep::new("b", "t", json!({"x": "{{steps.a.output}}"})),
            ],
            source: PlanSource::Reasoned,
        };
        assert!(matches!(cyc.validate(10), Err(PlanError::Cycle(_))));
        let dangling =
            Plan { steps: vec![PlanStep::new("a", "t", json!("{{steps.z.output}}"))], source: PlanSource::Reasoned };
        assert!(matches!(dangling.validate(10), Err(PlanError::UnknownDependency { .. })));
    }

    #[test]
    fn substitution() {
        let outputs = HashMap::from([("s1".to_string(), "sunny".to_string())]);
        let v = substitute_outputs(&json!({"input": "sum: {{steps.s1.output}} {{steps.s9.output}}"}), &outputs);
        assert_eq!(v["input"], "sum: sunny {{steps.s9.output}}");
        let t = templatize_message(&json!({"input": "hi there", "n": ["hi there"]}), "hi there");
        assert_eq!(t, json!({"input": "{{message}}", "n": ["{{message}}"]}));
        assert_eq!(substitute_message(&t, "yo"), json!({"input": "yo", "n": ["yo"]}));
    }
}
