//! Skill registry: crystallization from repeated episodes, maturation,
//! apoptosis, and user-registered plugin skills.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::Episode;
use crate::perception::{EntityKind, Intent, Perception};
use crate::snapshot;
use crate::text::fnv1a;
use crate::toolhub::ToolCall;

pub const COMMIT_SUCCESSES: u64 = 3;
pub const MATURE_SUCCESSES: u64 = 10;
pub const PROMOTION_RATE: f64 = 0.6;
pub const APOPTOSIS_ACTIVATIONS: u64 = 10;
pub const APOPTOSIS_RATE: f64 = 0.3;
pub const MATCH_THRESHOLD: f64 = 0.5;
pub const CRYSTALLIZE_MIN_GROUP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Progenitor,
    Committed,
    Mature,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Progenitor => "progenitor",
            Stage::Committed => "committed",
            Stage::Mature => "mature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillOrigin {
    Crystallized,
    Plugin,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    #[serde(default)]
    pub intents: BTreeSet<Intent>,
    #[serde(default)]
    pub domains: BTreeSet<String>,
    #[serde(default)]
    pub entity_kinds: BTreeSet<EntityKind>,
}

impl Trigger {
    pub fn is_empty(&self) -> bool {
        self.intents.is_empty() && self.domains.is_empty() && self.entity_kinds.is_empty()
    }

    /// Weighted overlap with a perception. An empty set constrains nothing
    /// and contributes its full weight.
    pub fn score(&self, p: &Perception) -> f64 {
        let intent = if self.intents.is_empty() || self.intents.contains(&p.intent) { 1.0 } else { 0.0 };
        let domain = if self.domains.is_empty() {
            1.0
        } else {
            let hits = self.domains.iter().filter(|d| p.domain_hints.iter().any(|h| h == *d)).count();
            hits as f64 / self.domains.len() as f64
        };
        let entity = if self.entity_kinds.is_empty() {
            1.0
        } else {
            let kinds = p.entity_kinds();
            let hits = self.entity_kinds.iter().filter(|k| kinds.contains(k)).count();
            hits as f64 / self.entity_kinds.len() as f64
        };
        0.5 * intent + 0.3 * domain + 0.2 * entity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub origin: SkillOrigin,
    pub trigger: Trigger,
    /// Call templates; `{{message}}` and `{{steps.<id>.output}}` are filled at run time.
    pub action_sequence: Vec<ToolCall>,
    pub stage: Stage,
    pub activations: u64,
    pub successes: u64,
    pub created_at: DateTime<Utc>,
    pub last_activated: Option<DateTime<Utc>>,
}

impl Skill {
    pub fn success_rate(&self) -> f64 {
        if self.activations == 0 {
            0.0
        } else {
            self.successes as f64 / self.activations as f64
        }
    }

    pub fn action_key(&self) -> String {
        crate::memory::action_key(&self.action_sequence)
    }

    /// Usable for skipping reasoning and planning.
    pub fn can_shortcut(&self) -> bool {
        self.stage >= Stage::Committed
    }
}

fn rate_at_least(successes: u64, activations: u64, rate: f64) -> bool {
    activations > 0 && successes as f64 >= rate * activations as f64
}

/// Stage after counters reach (`successes`, `activations`). Never regresses.
pub fn promoted_stage(stage: Stage, successes: u64, activations: u64) -> Stage {
    let mut stage = stage;
    let healthy = rate_at_least(successes, activations, PROMOTION_RATE);
    if stage == Stage::Progenitor && successes >= COMMIT_SUCCESSES && healthy {
        stage = Stage::Committed;
    }
    if stage == Stage::Committed && successes >= MATURE_SUCCESSES && healthy {
        stage = Stage::Mature;
    }
    stage
}

pub fn triggers_apoptosis(origin: SkillOrigin, successes: u64, activations: u64) -> bool {
    origin != SkillOrigin::Plugin
        && activations >= APOPTOSIS_ACTIVATIONS
        && (successes as f64) < APOPTOSIS_RATE * activations as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OutcomeEffect {
    Updated { skill: Skill },
    Removed { skill: Skill },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillMatch {
    pub skill: Skill,
    pub score: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SkillError {
    #[error("unknown skill: {0}")]
    UnknownSkill(String),
    #[error("invalid skill definition: {0}")]
    InvalidDefinition(String),
}

/// A plugin skill as submitted by an operator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PluginDefinition {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    pub trigger: Trigger,
    pub action_sequence: Vec<ToolCall>,
}

fn derive_id(trigger: &Trigger, actions: &[ToolCall]) -> String {
    let canonical = serde_json::to_string(&(trigger, actions)).unwrap_or_default();
    format!("skill-{:016x}", fnv1a(canonical.as_bytes()))
}

#[derive(Debug, Default)]
pub struct SkillRegistry {
    skills: RwLock<Vec<Skill>>,
}

impl SkillRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.skills.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.read().is_empty()
    }

    pub fn get(&self, id: &str) -> Option<Skill> {
        self.skills.read().iter().find(|s| s.id == id).cloned()
    }

    /// Sorted by id.
    pub fn list(&self) -> Vec<Skill> {
        let mut all = self.skills.read().clone();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }

    /// Skills scoring at least the threshold, best first by
    /// (stage, score, success rate, recency).
    pub fn matches(&self, p: &Perception) -> Vec<SkillMatch> {
        let mut out: Vec<SkillMatch> = self
            .skills
            .read()
            .iter()
            .filter_map(|s| {
                let score = s.trigger.score(p);
                (score >= MATCH_THRESHOLD).then(|| SkillMatch { skill: s.clone(), score })
            })
            .collect();
        out.sort_by(|a, b| {
            b.skill
                .stage
                .cmp(&a.skill.stage)
                .then(b.score.total_cmp(&a.score))
                .then(b.skill.success_rate().total_cmp(&a.skill.success_rate()))
                .then(b.skill.last_activated.cmp(&a.skill.last_activated))
                .then(a.skill.id.cmp(&b.skill.id))
        });
        out
    }

    pub fn record_outcome(&self, id: &str, success: bool, at: DateTime<Utc>) -> Result<OutcomeEffect, SkillError> {
        let mut skills = self.skills.write();
        let i = skills.iter().position(|s| s.id == id).ok_or_else(|| SkillError::UnknownSkill(id.to_string()))?;
        let s = &mut skills[i];
        s.activations += 1;
        if success {
            s.successes += 1;
        }
        s.last_activated = Some(at);
        if triggers_apoptosis(s.origin, s.successes, s.activations) {
            let skill = skills.remove(i);
            tracing::info!(skill = %skill.id, rate = skill.success_rate(), "skill removed by apoptosis");
            return Ok(OutcomeEffect::Removed { skill });
        }
        let before = s.stage;
        s.stage = promoted_stage(s.stage, s.successes, s.activations);
        if s.stage != before {
            tracing::info!(skill = %s.id, from = before.as_str(), to = s.stage.as_str(), "skill promoted");
        }
        Ok(OutcomeEffect::Updated { skill: s.clone() })
    }

    /// New progenitors from groups of at least three successful episodes
    /// sharing an action key and a topic token present in half the group.
    pub fn try_crystallize(&self, episodes: &[Episode], at: DateTime<Utc>) -> Vec<Skill> {
        let mut groups: BTreeMap<&str, Vec<&Episode>> = BTreeMap::new();
        for e in episodes.iter().filter(|e| e.outcome.success && !e.action_key.is_empty()) {
            groups.entry(e.action_key.as_str()).or_default().push(e);
        }
        let mut created = Vec::new();
        let mut skills = self.skills.write();
        for members in groups.values().filter(|m| m.len() >= CRYSTALLIZE_MIN_GROUP) {
            let Some(trigger) = group_trigger(members) else {
                continue;
            };
            let Some(latest) = members.iter().max_by_key(|e| e.id) else {
                continue;
            };
            let actions = latest.actions.clone();
            if skills.iter().any(|s| s.trigger == trigger && s.action_sequence == actions) {
                continue;
            }
            let skill = Skill {
                id: derive_id(&trigger, &actions),
                name: None,
                origin: SkillOrigin::Crystallized,
                trigger,
                action_sequence: actions,
                stage: Stage::Progenitor,
                activations: 0,
                successes: 0,
                created_at: at,
                last_activated: None,
            };
            if skills.iter().any(|s| s.id == skill.id) {
                continue;
            }
            tracing::info!(skill = %skill.id, key = %skill.action_key(), "skill crystallized");
            skills.push(skill.clone());
            created.push(skill);
        }
        created
    }

    pub fn register_plugin(&self, def: PluginDefinition, at: DateTime<Utc>) -> Result<Skill, SkillError> {
        if def.trigger.is_empty() {
            return Err(SkillError::InvalidDefinition("trigger must not be empty".into()));
        }
        if def.action_sequence.is_empty() {
            return Err(SkillError::InvalidDefinition("action_sequence must not be empty".into()));
        }
        if let Some(bad) = def.action_sequence.iter().find(|c| c.tool.trim().is_empty()) {
            return Err(SkillError::InvalidDefinition(format!("action has no tool name: {}", bad.arguments)));
        }
        let id = match def.id {
            Some(id) if id.trim().is_empty() => {
                return Err(SkillError::InvalidDefinition("id must not be blank".into()))
            }
            Some(id) => id,
            None => derive_id(&def.trigger, &def.action_sequence),
        };
        let mut skills = self.skills.write();
        if skills.iter().any(|s| s.id == id) {
            return Err(SkillError::InvalidDefinition(format!("a skill with id {id} already exists")));
        }
        let skill = Skill {
            id,
            name: def.name,
            origin: SkillOrigin::Plugin,
            trigger: def.trigger,
            action_sequence: def.action_sequence,
            stage: Stage::Committed,
            activations: 0,
            successes: 0,
            created_at: at,
            last_activated: None,
        };
        skills.push(skill.clone());
        Ok(skill)
    }

    pub fn remove(&self, id: &str) -> Result<Skill, SkillError> {
        let mut skills = self.skills.write();
        let i = skills.iter().position(|s| s.id == id).ok_or_else(|| SkillError::UnknownSkill(id.to_string()))?;
        Ok(skills.remove(i))
    }

    pub fn insert(&self, skill: Skill) {
        let mut skills = self.skills.write();
        skills.retain(|s| s.id != skill.id);
        skills.push(skill);
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        snapshot::write_jsonl(path, &self.list())
    }

    pub fn load(&self, path: &Path) -> io::Result<usize> {
        let loaded: Vec<Skill> = snapshot::read_jsonl(path)?;
        let n = loaded.len();
        *self.skills.write() = loaded;
        Ok(n)
    }
}

fn group_trigger(members: &[&Episode]) -> Option<Trigger> {
    let n = members.len();
    let half = |count: usize| count * 2 >= n;
    let mut tokens: BTreeMap<&str, usize> = BTreeMap::new();
    let mut kinds: BTreeMap<EntityKind, usize> = BTreeMap::new();
    let mut intents: BTreeMap<Intent, usize> = BTreeMap::new();
    for e in members {
        let distinct: BTreeSet<&str> = e.perception.domain_hints.iter().map(String::as_str).collect();
        for t in distinct {
            *tokens.entry(t).or_default() += 1;
        }
        let distinct: BTreeSet<EntityKind> = e.perception.entity_kinds.iter().copied().collect();
        for k in distinct {
            *kinds.entry(k).or_default() += 1;
        }
        *intents.entry(e.perception.intent).or_default() += 1;
    }
    let domains: BTreeSet<String> = tokens
        .into_iter()
        .filter(|(t, c)| half(*c) && !crate::text::is_stopword(t))
        .map(|(t, _)| t.to_string())
        .collect();
    if domains.is_empty() {
        return None;
    }
    let best = intents.values().copied().max()?;
    let intent = intents.into_iter().find(|(_, c)| *c == best).map(|(i, _)| i)?;
    Some(Trigger {
        intents: BTreeSet::from([intent]),
        domains,
        entity_kinds: kinds.into_iter().filter(|(_, c)| half(*c)).map(|(k, _)| k).collect(),
    })
}
