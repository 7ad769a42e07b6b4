use std::collections::HashMap;
use std::time::Instant;

use futures::stream::{FuturesUnordered, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{output_text, ToolError, ToolHub, RESPOND_TOOL};
use crate::cognition::{substitute_outputs, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Succeeded,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub id: String,
    pub tool: String,
    pub arguments: Value,
    pub status: StepStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: u32,
    /// Milliseconds since the plan started.
    pub started_ms: f64,
    pub finished_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    /// In plan order.
    pub steps: Vec<StepReport>,
    pub success: bool,
}

impl ExecutionReport {
    pub fn tool_steps(&self) -> impl Iterator<Item = &StepReport> {
        self.steps.iter().filter(|s| s.tool != RESPOND_TOOL)
    }
}

/// Optional hooks for callers that stream step progress.
pub trait StepObserver: Send + Sync {
    fn step_started(&self, _id: &str, _tool: &str, _arguments: &Value) {}
    fn step_finished(&self, _report: &StepReport) {}
}

struct NoopObserver;
impl StepObserver for NoopObserver {}

#[derive(PartialEq)]
enum Slot {
    Pending,
    Running,
    Done(StepStatus),
}

impl ToolHub {
    pub async fn execute_plan(&self, plan: &Plan) -> ExecutionReport {
        self.execute_plan_observed(plan, &NoopObserver).await
    }

    /// Runs every step whose dependencies all succeeded, up to `parallelism`
    /// at once. Dependents of a failed or skipped step are skipped.
    pub async fn execute_plan_observed(&self, plan: &Plan, observer: &dyn StepObserver) -> ExecutionReport {
        let t0 = Instant::now();
        let ms = move || t0.elapsed().as_secs_f64() * 1000.0;
        let index: HashMap<&str, usize> = plan.steps.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let mut slots: Vec<Slot> = plan.steps.iter().map(|_| Slot::Pending).collect();
        let mut reports: Vec<Option<StepReport>> = vec![None; plan.steps.len()];
        let mut outputs: HashMap<String, String> = HashMap::new();
        let mut running = FuturesUnordered::new();
        let limit = self.config().parallelism.max(1);

        loop {
            // settle skips until fixpoint, then launch what is ready
            let mut changed = true;
            while changed {
                changed = false;
                for (i, step) in plan.steps.iter().enumerate() {
                    if slots[i] != Slot::Pending {
                        continue;
                    }
                    let blocked = step.depends_on.iter().any(|d| {
                        index
                            .get(d.as_str())
                            .is_none_or(|&j| matches!(slots[j], Slot::Done(StepStatus::Failed | StepStatus::Skipped)))
                    });
                    if blocked {
                        let now = ms();
                        let report = StepReport {
                            id: step.id.clone(),
                            tool: step.tool.clone(),
                            arguments: step.arguments.clone(),
                            status: StepStatus::Skipped,
                            output: None,
                            error: Some("dependency did not succeed".into()),
                            attempts: 0,
                            started_ms: now,
                            finished_ms: now,
                        };
                        observer.step_finished(&report);
                        reports[i] = Some(report);
                        slots[i] = Slot::Done(StepStatus::Skipped);
                        changed = true;
                    }
                }
            }
            for (i, step) in plan.steps.iter().enumerate() {
                if running.len() >= limit {
                    break;
                }
                if slots[i] != Slot::Pending {
                    continue;
                }
                let ready = step
                    .depends_on
                    .iter()
                    .all(|d| index.get(d.as_str()).is_some_and(|&j| slots[j] == Slot::Done(StepStatus::Succeeded)));
                if !ready {
                    continue;
                }
                slots[i] = Slot::Running;
                let arguments = substitute_outputs(&step.arguments, &outputs);
                observer.step_started(&step.id, &step.tool, &arguments);
                let started = ms();
                let tool = step.tool.clone();
                running.push(async move {
                    let result = if tool == RESPOND_TOOL {
                        Ok(super::ToolCallResult { output: arguments.clone(), attempts: 0 })
                    } else {
                        self.call_tool(&tool, arguments.clone()).await
                    };
                    (i, arguments, started, result)
                });
            }
            let Some((i, arguments, started_ms, result)) = running.next().await else {
                break;
            };
            let step = &plan.steps[i];
            let (status, output, error, attempts) = match result {
                Ok(r) => (StepStatus::Succeeded, Some(r.output), None, r.attempts),
                Err(e) => {
                    let attempts = match &e {
                        ToolError::ToolFailed { attempts, .. } => *attempts,
                        _ => 0,
                    };
                    (StepStatus::Failed, None, Some(e.to_string()), attempts)
                }
            };
            if let Some(out) = &output {
                outputs.insert(step.id.clone(), output_text(out));
            }
            let report = StepReport {
                id: step.id.clone(),
                tool: step.tool.clone(),
                arguments,
                status,
                output,
                error,
                attempts,
                started_ms,
                finished_ms: ms(),
            };
            observer.step_finished(&report);
            reports[i] = Some(report);
            slots[i] = Slot::Done(status);
        }

        // anything left pending sits behind a cycle or a missing id
        let steps: Vec<StepReport> = plan
            .steps
            .iter()
            .zip(reports)
            .map(|(step, r)| {
                r.unwrap_or_else(|| StepReport {
                    id: step.id.clone(),
                    tool: step.tool.clone(),
                    arguments: step.arguments.clone(),
                    status: StepStatus::Skipped,
                    output: None,
                    error: Some("unresolvable dependency".into()),
                    attempts: 0,
                    started_ms: ms(),
                    finished_ms: ms(),
                })
            })
            .collect();
        let success = steps.iter().all(|s| s.status == StepStatus::Succeeded);
        ExecutionReport { steps, success }
    }
}
