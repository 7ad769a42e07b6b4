//! The eight-phase pipeline. Phases 1 to 7 run inline and produce the
//! response; phase 8 (learning) is spawned afterwards and never delays it.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::mpsc::UnboundedSender;
use tokio::task::JoinHandle;

use super::{calls_for, format_response, plan, reason, select_strategy, templatize_message};
use super::{Plan, PlanSource, ReasoningTrace, Strategy, TraceStep};
use crate::memory::{EpisodeDraft, ForgetCounts, MemoryConfig, MemoryManager, PerceptionSummary, TaskSignature};
use crate::perception::{Metadata, Perceiver, Perception, PerceptionError};
use crate::profiler::{
    adapt, extract_signals, response_formality, BehaviorParameters, CallerProfile, ProfileStore, ProfilerConfig,
    Signals,
};
use crate::skills::{OutcomeEffect, Skill, SkillRegistry};
use crate::toolhub::demo::demo_provider;
use crate::toolhub::{
    ExecutionReport, StepObserver, StepReport, ToolCall, ToolError, ToolHub, ToolHubConfig, RESPOND_TOOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Perceive,
    Adapt,
    SkillMatch,
    Reason,
    Plan,
    Execute,
    Format,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Perceive => "perceive",
            Phase::Adapt => "adapt",
            Phase::SkillMatch => "skill_match",
            Phase::Reason => "reason",
            Phase::Plan => "plan",
            Phase::Execute => "execute",
            Phase::Format => "format",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub phase: Phase,
    pub duration_ms: f64,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PipelineEvent {
    PhaseStarted { phase: Phase },
    PhaseFinished { entry: PhaseEntry },
    Reasoning { step: TraceStep },
    Parameters { parameters: BehaviorParameters },
    ToolCallStarted { step_id: String, tool: String, arguments: Value },
    ToolCallFinished { report: StepReport },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResult {
    pub run_id: String,
    pub caller_id: String,
    pub response: String,
    pub success: bool,
    /// Executed phases, in order.
    pub trace: Vec<PhaseEntry>,
    pub skill_shortcut_used: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skill_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_source: Option<PlanSource>,
    pub perception: Perception,
    pub parameters: BehaviorParameters,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<ReasoningTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PipelineResult {
    pub fn phase_names(&self) -> Vec<&'static str> {
        self.trace.iter().map(|e| e.phase.as_str()).collect()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("caller id must not be empty")]
    EmptyCaller,
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub profiler: ProfilerConfig,
    pub memory: MemoryConfig,
    pub tools: ToolHubConfig,
    /// Episodes considered for crystallization after each run.
    pub crystallize_window: usize,
    /// Minimum success rate for a stored procedure to seed a plan.
    pub procedure_reuse_rate: f64,
    pub demo_tools: bool,
    pub data_dir: Option<PathBuf>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            profiler: ProfilerConfig::default(),
            memory: MemoryConfig::default(),
            tools: ToolHubConfig::default(),
            crystallize_window: 50,
            procedure_reuse_rate: 0.7,
            demo_tools: true,
            data_dir: None,
        }
    }
}

/// Ordering instrumentation: called when the response is final and when
/// that run's learning has been committed.
pub trait LearnObserver: Send + Sync {
    fn response_ready(&self, _run_id: &str) {}
    fn learned(&self, _run_id: &str) {}
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgetReport {
    pub caller_id: String,
    pub profile: bool,
    pub episodes: usize,
    pub triples: usize,
    pub contexts: usize,
}

struct Inner {
    config: AgentConfig,
    profiles: ProfileStore,
    memory: MemoryManager,
    skills: SkillRegistry,
    tools: ToolHub,
    pending: Mutex<Vec<JoinHandle<()>>>,
    observer: Mutex<Option<Arc<dyn LearnObserver>>>,
}

#[derive(Clone)]
pub struct Agent {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent").field("config", &self.inner.config).finish_non_exhaustive()
    }
}

struct EventObserver<'a>(Option<&'a UnboundedSender<PipelineEvent>>);

impl StepObserver for EventObserver<'_> {
    fn step_started(&self, id: &str, tool: &str, arguments: &Value) {
        if tool == RESPOND_TOOL {
            return;
        }
        if let Some(tx) = self.0 {
            let _ = tx.send(PipelineEvent::ToolCallStarted {
                step_id: id.to_string(),
                tool: tool.to_string(),
                arguments: arguments.clone(),
            });
        }
    }

    fn step_finished(&self, report: &StepReport) {
        if report.tool == RESPOND_TOOL {
            return;
        }
        if let Some(tx) = self.0 {
            let _ = tx.send(PipelineEvent::ToolCallFinished { report: report.clone() });
        }
    }
}

struct Recorder<'a> {
    sink: Option<&'a UnboundedSender<PipelineEvent>>,
    trace: Vec<PhaseEntry>,
    started: Option<(Phase, Instant)>,
}

impl Recorder<'_> {
    fn emit(&self, event: PipelineEvent) {
        if let Some(tx) = self.sink {
            let _ = tx.send(event);
        }
    }

    fn start(&mut self, phase: Phase) {
        self.started = Some((phase, Instant::now()));
        self.emit(PipelineEvent::PhaseStarted { phase });
    }

    fn finish(&mut self, summary: impl Into<String>) {
        let Some((phase, t0)) = self.started.take() else {
            return;
        };
        let entry = PhaseEntry { phase, duration_ms: t0.elapsed().as_secs_f64() * 1000.0, summary: summary.into() };
        self.emit(PipelineEvent::PhaseFinished { entry: entry.clone() });
        self.trace.push(entry);
    }
}

/// Everything phase 8 needs, captured when the response is ready.
struct LearnInput {
    run_id: String,
    caller_id: String,
    message: String,
    perception: Perception,
    signals: Signals,
    strategy: Option<Strategy>,
    /// Executed tool calls as templates.
    actions: Vec<ToolCall>,
    success: bool,
    response: String,
    /// Top match and whether it drove the plan.
    skill: Option<(Skill, bool)>,
}

impl Agent {
    /// Builds an agent, registers the demo tools if configured, and
    /// restores any snapshot found in the data directory.
    pub async fn new(config: AgentConfig) -> Result<Agent, PipelineError> {
        let tools = ToolHub::new(config.tools.clone());
        if config.demo_tools {
            tools.register_provider(Arc::new(demo_provider())).await?;
        }
        let agent = Agent {
            inner: Arc::new(Inner {
                profiles: ProfileStore::new(),
                memory: MemoryManager::new(config.memory),
                skills: SkillRegistry::new(),
                tools,
                pending: Mutex::new(Vec::new()),
                observer: Mutex::new(None),
                config,
            }),
        };
        if let Some(dir) = agent.inner.config.data_dir.clone() {
            agent.restore(&dir)?;
        }
        Ok(agent)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.inner.config
    }

    pub fn tools(&self) -> &ToolHub {
        &self.inner.tools
    }

    pub fn skills(&self) -> &SkillRegistry {
        &self.inner.skills
    }

    pub fn memory(&self) -> &MemoryManager {
        &self.inner.memory
    }

    pub fn profiles(&self) -> &ProfileStore {
        &self.inner.profiles
    }

    pub fn profile(&self, caller_id: &str) -> CallerProfile {
        self.inner.profiles.get(caller_id)
    }

    pub fn set_learn_observer(&self, observer: Option<Arc<dyn LearnObserver>>) {
        *self.inner.observer.lock() = observer;
    }

    pub async fn run(
        &self,
        caller_id: &str,
        message: &str,
        metadata: &Metadata,
    ) -> Result<PipelineResult, PipelineError> {
        self.run_with_events(caller_id, message, metadata, None).await
    }

    /// Runs phases 1 to 7, streaming progress to `sink`, then schedules learning.
    pub async fn run_with_events(
        &self,
        caller_id: &str,
        message: &str,
        metadata: &Metadata,
        sink: Option<UnboundedSender<PipelineEvent>>,
    ) -> Result<PipelineResult, PipelineError> {
        if caller_id.trim().is_empty() {
            return Err(PipelineError::EmptyCaller);
        }
        let inner = &self.inner;
        let run_id = uuid::Uuid::new_v4().to_string();
        let mut rec = Recorder { sink: sink.as_ref(), trace: Vec::new(), started: None };
        let tools = inner.tools.list_tools();

        rec.start(Phase::Perceive);
        let perception = Perceiver::new(tools.iter().map(|t| t.name.clone())).perceive(message, metadata)?;
        rec.finish(format!(
            "intent={} complexity={:?} entities={} requires_tools={}",
            perception.intent.as_str(),
            perception.complexity,
            perception.entities.len(),
            perception.requires_tools
        ));

        rec.start(Phase::Adapt);
        let profile = inner.profiles.get(caller_id);
        let signals = extract_signals(&perception, message, metadata);
        let params = adapt(&profile, &signals, &perception, &inner.config.profiler);
        let formality = response_formality(&profile, &signals, &inner.config.profiler);
        rec.emit(PipelineEvent::Parameters { parameters: params.clone() });
        rec.finish(format!(
            "depth={} verbosity={:.2} confidence={:.3}",
            params.reasoning_depth,
            params.verbosity,
            profile.confidence(inner.config.profiler.kappa)
        ));

        rec.start(Phase::SkillMatch);
        let matches = inner.skills.matches(&perception);
        let top = matches.first().map(|m| m.skill.clone());
        let available = |name: &str| tools.iter().any(|t| t.name == name);
        let shortcut_plan = top.as_ref().filter(|s| s.can_shortcut()).and_then(|s| {
            let p = Plan::from_calls(
                &s.action_sequence,
                message,
                &available,
                params.max_plan_steps,
                PlanSource::SkillShortcut,
            );
            (!p.steps.is_empty()).then_some(p)
        });
        rec.finish(match (&top, &shortcut_plan) {
            (Some(s), Some(_)) => format!("{} matches; shortcut via {} ({})", matches.len(), s.id, s.stage.as_str()),
            (Some(s), None) => format!("{} matches; top {} is {}", matches.len(), s.id, s.stage.as_str()),
            _ => "no matching skill".to_string(),
        });

        let shortcut = shortcut_plan.is_some();
        let mut strategy = None;
        let mut reasoning = None;
        let mut plan_error = None;
        let the_plan = if let Some(p) = shortcut_plan {
            Some(p)
        } else {
            rec.start(Phase::Reason);
            let s = select_strategy(&perception, &params);
            let trace = reason(message, &perception, &params, s, &tools);
            for step in &trace.steps {
                rec.emit(PipelineEvent::Reasoning { step: step.clone() });
            }
            rec.finish(format!("{} with {} steps", s.as_str(), trace.steps.len()));
            strategy = Some(s);

            rec.start(Phase::Plan);
            let planned = match plan(&trace, message, &perception, &tools, &params) {
                Ok(p) => Some(self.reuse_procedure(p, &perception, s, message, &params, &available)),
                Err(e) => {
                    plan_error = Some(e.to_string());
                    None
                }
            };
            rec.finish(match &planned {
                Some(p) => format!("{} steps ({:?})", p.steps.len(), p.source),
                None => format!("no plan: {}", plan_error.as_deref().unwrap_or_default()),
            });
            reasoning = Some(trace);
            planned
        };

        rec.start(Phase::Execute);
        let execution = match &the_plan {
            Some(p) => {
                let observer = EventObserver(sink.as_ref());
                Some(inner.tools.execute_plan_observed(p, &observer).await)
            }
            None => None,
        };
        rec.finish(match &execution {
            Some(e) => format!("{} steps, success={}", e.steps.len(), e.success),
            None => "nothing to execute".to_string(),
        });

        rec.start(Phase::Format);
        let (response, success) = match &execution {
            Some(e) => (format_response(e, &params, formality), e.success),
            None => {
                let why = plan_error.clone().unwrap_or_else(|| "no plan".into());
                let lead =
                    if formality >= 0.5 { "The request could not be completed" } else { "Sorry, I couldn't do that" };
                (format!("{lead}: {why}."), false)
            }
        };
        rec.finish(format!("{} chars", response.chars().count()));

        let actions: Vec<ToolCall> = execution
            .as_ref()
            .map(|e| {
                the_plan
                    .as_ref()
                    .map(|p| {
                        p.steps
                            .iter()
                            .zip(&e.steps)
                            .filter(|(s, _)| s.tool != RESPOND_TOOL)
                            .map(|(s, _)| ToolCall::new(s.tool.clone(), templatize_message(&s.arguments, message)))
                            .collect()
                    })
                    .unwrap_or_default()
            })
            .unwrap_or_default();

        let result = PipelineResult {
            run_id: run_id.clone(),
            caller_id: caller_id.to_string(),
            response: response.clone(),
            success,
            trace: rec.trace,
            skill_shortcut_used: shortcut,
            skill_id: if shortcut { top.as_ref().map(|s| s.id.clone()) } else { None },
            strategy,
            plan_source: the_plan.as_ref().map(|p| p.source),
            perception: perception.clone(),
            parameters: params,
            reasoning,
            plan: the_plan,
            execution,
            error: plan_error,
        };

        let observer = inner.observer.lock().clone();
        if let Some(o) = &observer {
            o.response_ready(&run_id);
        }
        self.spawn_learning(LearnInput {
            run_id,
            caller_id: caller_id.to_string(),
            message: message.to_string(),
            perception,
            signals,
            strategy,
            actions,
            success,
            response,
            skill: top.map(|s| (s, shortcut)),
        });
        Ok(result)
    }

    /// Swaps in a stored tool sequence for a tool-using run when memory
    /// holds a reliable procedure for the same task signature.
    fn reuse_procedure(
        &self,
        reasoned: Plan,
        p: &Perception,
        strategy: Strategy,
        message: &str,
        params: &BehaviorParameters,
        available: &dyn Fn(&str) -> bool,
    ) -> Plan {
        if strategy != Strategy::React {
            return reasoned;
        }
        let sig = TaskSignature { intent: p.intent, complexity: p.complexity };
        let Some(proc) = self.inner.memory.best_procedure(sig) else {
            return reasoned;
        };
        let usable = !proc.tools.is_empty()
            && proc.success_rate() >= self.inner.config.procedure_reuse_rate
            && proc.tools.iter().all(|t| available(t));
        if !usable {
            return reasoned;
        }
        let plan = Plan::from_calls(
            &calls_for(&proc.tools),
            message,
            available,
            params.max_plan_steps,
            PlanSource::ProcedureReuse,
        );
        if plan.steps.is_empty() {
            reasoned
        } else {
            plan
        }
    }

    fn spawn_learning(&self, input: LearnInput) {
        let agent = self.clone();
        let handle = tokio::spawn(async move {
            let run_id = input.run_id.clone();
            agent.learn(input);
            let observer = agent.inner.observer.lock().clone();
            if let Some(o) = observer {
                o.learned(&run_id);
            }
        });
        let mut pending = self.inner.pending.lock();
        pending.retain(|h| !h.is_finished());
        pending.push(handle);
    }

    /// Phase 8.
    fn learn(&self, input: LearnInput) {
        let inner = &self.inner;
        let now = Utc::now();
        inner.profiles.learn(&input.caller_id, &input.signals, inner.config.profiler.alpha);

        if let Some((skill, drove_plan)) = &input.skill {
            let same_actions = crate::memory::action_key(&input.actions) == skill.action_key();
            if *drove_plan || same_actions {
                match inner.skills.record_outcome(&skill.id, input.success, now) {
                    Ok(OutcomeEffect::Removed { skill }) => tracing::debug!(skill = %skill.id, "removed"),
                    Ok(OutcomeEffect::Updated { .. }) => {}
                    Err(e) => tracing::debug!(error = %e, "skill vanished before its outcome was recorded"),
                }
            }
        }

        let p = &input.perception;
        let tool_names: Vec<String> = input.actions.iter().map(|a| a.tool.clone()).collect();
        inner.memory.record_episode(EpisodeDraft {
            caller_id: input.caller_id.clone(),
            message: input.message.clone(),
            perception: PerceptionSummary {
                intent: p.intent,
                complexity: p.complexity,
                entity_kinds: p.entity_kinds(),
                domain_hints: p.domain_hints.clone(),
                urgency: p.urgency,
            },
            strategy: input.strategy,
            actions: input.actions,
            success: input.success,
        });
        inner.memory.record_turn(&input.caller_id, &input.message, &input.response, now);
        for e in &p.entities {
            inner.memory.record_triple(&input.caller_id, "mentions", &e.text);
        }
        if let Some(s) = input.strategy {
            inner.memory.record_procedure(
                TaskSignature { intent: p.intent, complexity: p.complexity },
                s,
                &tool_names,
                input.success,
            );
        }
        let window = inner.memory.recent_episodes(inner.config.crystallize_window);
        inner.skills.try_crystallize(&window, now);
    }

    /// Waits for every scheduled learning task.
    pub async fn settle(&self) {
        loop {
            let handles: Vec<JoinHandle<()>> = std::mem::take(&mut *self.inner.pending.lock());
            if handles.is_empty() {
                return;
            }
            for h in handles {
                if let Err(e) = h.await {
                    tracing::warn!(error = %e, "learning task failed");
                }
            }
        }
    }

    /// Erases everything held about a caller.
    pub async fn forget_caller(&self, caller_id: &str) -> ForgetReport {
        self.settle().await;
        let profile = self.inner.profiles.remove(caller_id);
        let ForgetCounts { episodes, triples, contexts } = self.inner.memory.forget_caller(caller_id);
        ForgetReport { caller_id: caller_id.to_string(), profile, episodes, triples, contexts }
    }

    /// Writes every store to `dir` as JSON lines.
    pub async fn checkpoint(&self, dir: &Path) -> Result<(), PipelineError> {
        self.settle().await;
        std::fs::create_dir_all(dir)?;
        self.inner.profiles.save(&dir.join("profiles.jsonl"))?;
        self.inner.skills.save(&dir.join("skills.jsonl"))?;
        self.inner.memory.save(dir)?;
        Ok(())
    }

    pub fn restore(&self, dir: &Path) -> Result<(), PipelineError> {
        if !dir.exists() {
            return Ok(());
        }
        self.inner.profiles.load(&dir.join("profiles.jsonl"))?;
        self.inner.skills.load(&dir.join("skills.jsonl"))?;
        self.inner.memory.load(dir)?;
        Ok(())
    }
}
