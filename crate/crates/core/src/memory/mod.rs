//! Episodic, semantic, procedural and user-context memory behind one facade.
//!
//! Consolidation runs three passes in order: prune episodic memory down to
//! the cap, merge duplicate triples, and extract recurring (intent, action)
//! patterns into procedures and `frequently_requests` triples.

mod context;
mod embedding;
mod episodic;
mod procedural;
mod semantic;

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::cognition::Strategy;
use crate::perception::{Complexity, Intent};
use crate::snapshot;

pub use context::{ContextStore, HistoryTurn, SessionRecord, UserContext, SESSION_GAP_MINUTES};
pub use embedding::{cosine, embed, EMBEDDING_DIM};
pub use episodic::{action_key, importance, Episode, EpisodeDraft, EpisodicStore, Outcome, PerceptionSummary};
pub use procedural::{ProceduralStore, Procedure, TaskSignature};
pub use semantic::{SemanticStore, Triple, TripleSource};

pub const FREQUENTLY_REQUESTS: &str = "frequently_requests";
/// Minimum group size for pattern extraction.
pub const PATTERN_MIN_EPISODES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub episodic_cap: usize,
    pub consolidate_every: usize,
    pub history_cap: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { episodic_cap: 500, consolidate_every: 50, history_cap: 50 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub pruned: usize,
    pub deduplicated: usize,
    pub patterns_extracted: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetCounts {
    pub episodes: usize,
    pub triples: usize,
    pub contexts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub episodes: usize,
    pub episodic_cap: usize,
    pub triples: usize,
    pub triple_weight: u64,
    pub procedures: usize,
    pub contexts: usize,
    pub episodes_since_consolidation: usize,
}

#[derive(Debug, Default)]
pub struct MemoryManager {
    config: MemoryConfig,
    episodic: RwLock<EpisodicStore>,
    semantic: RwLock<SemanticStore>,
    procedural: RwLock<ProceduralStore>,
    contexts: RwLock<ContextStore>,
    since_consolidation: RwLock<usize>,
}

impl MemoryManager {
    pub fn new(config: MemoryConfig) -> Self {
        Self { config, ..Default::default() }
    }

    pub fn config(&self) -> MemoryConfig {
        self.config
    }

    /// Records an episode; consolidates automatically every `consolidate_every` inserts.
    pub fn record_episode(&self, draft: EpisodeDraft) -> (Episode, Option<ConsolidationReport>) {
        let episode = self.episodic.write().record(draft);
        let due = {
            let mut n = self.since_consolidation.write();
            *n += 1;
            self.config.consolidate_every > 0 && *n >= self.config.consolidate_every
        };
        let report = due.then(|| self.consolidate());
        (episode, report)
    }

    pub fn record_triple(&self, subject: &str, predicate: &str, object: &str) {
        self.semantic.write().record(subject, predicate, object, TripleSource::Extracted, 1);
    }

    pub fn record_procedure(&self, sig: TaskSignature, strategy: Strategy, tools: &[String], success: bool) {
        self.procedural.write().record(sig, strategy, tools, success);
    }

    pub fn best_procedure(&self, sig: TaskSignature) -> Option<Procedure> {
        self.procedural.read().best(sig).cloned()
    }

    pub fn record_turn(&self, caller_id: &str, message: &str, response: &str, at: DateTime<Utc>) {
        self.contexts.write().record_turn(caller_id, message, response, at, self.config.history_cap);
    }

    pub fn recall_similar(&self, query: &str, k: usize) -> Vec<(Episode, f64)> {
        self.episodic.read().recall_similar(query, k)
    }

    pub fn recent_episodes(&self, n: usize) -> Vec<Episode> {
        self.episodic.read().recent(n)
    }

    pub fn episodes(&self) -> Vec<Episode> {
        self.episodic.read().all().to_vec()
    }

    pub fn triples(&self) -> Vec<Triple> {
        self.semantic.read().all().to_vec()
    }

    pub fn procedures(&self) -> Vec<Procedure> {
        self.procedural.read().all().to_vec()
    }

    pub fn user_context(&self, caller_id: &str) -> Option<UserContext> {
        self.contexts.read().get(caller_id).cloned()
    }

    pub fn stats(&self) -> MemoryStats {
        let semantic = self.semantic.read();
        MemoryStats {
            episodes: self.episodic.read().len(),
            episodic_cap: self.config.episodic_cap,
            triples: semantic.len(),
            triple_weight: semantic.total_weight(),
            procedures: self.procedural.read().len(),
            contexts: self.contexts.read().len(),
            episodes_since_consolidation: *self.since_consolidation.read(),
        }
    }

    /// Exclusive pass over episodic, semantic and procedural stores.
    pub fn consolidate(&self) -> ConsolidationReport {
        let mut episodic = self.episodic.write();
        let mut semantic = self.semantic.write();
        let mut procedural = self.procedural.write();
        *self.since_consolidation.write() = 0;

        let pruned = episodic.prune(self.config.episodic_cap);
        let deduplicated = semantic.deduplicate();

        let mut groups: BTreeMap<(Intent, String), Vec<&Episode>> = BTreeMap::new();
        for e in episodic.all() {
            groups.entry((e.perception.intent, e.action_key.clone())).or_default().push(e);
        }
        let mut patterns_extracted = 0;
        for ((intent, key), members) in groups {
            if members.len() < PATTERN_MIN_EPISODES {
                continue;
            }
            patterns_extracted += 1;
            let mut per_caller: BTreeMap<&str, u64> = BTreeMap::new();
            for e in &members {
                *per_caller.entry(e.caller_id.as_str()).or_default() += 1;
            }
            for (caller, count) in per_caller {
                semantic.refresh(caller, FREQUENTLY_REQUESTS, intent.as_str(), count);
            }
            if key.is_empty() {
                continue;
            }
            let complexity = majority(members.iter().map(|e| e.perception.complexity)).unwrap_or(Complexity::Medium);
            let strategy = majority(members.iter().filter_map(|e| e.strategy)).unwrap_or(Strategy::React);
            let tools: Vec<String> = key.split('>').map(str::to_string).collect();
            let uses = members.len() as u64;
            let successes = members.iter().filter(|e| e.outcome.success).count() as u64;
            procedural.refresh(TaskSignature { intent, complexity }, strategy, &tools, uses, successes);
        }
        ConsolidationReport { pruned, deduplicated, patterns_extracted }
    }

    /// Removes every record keyed to `caller_id`.
    pub fn forget_caller(&self, caller_id: &str) -> ForgetCounts {
        ForgetCounts {
            episodes: self.episodic.write().remove_caller(caller_id),
            triples: self.semantic.write().remove_subject(caller_id),
            contexts: usize::from(self.contexts.write().remove(caller_id)),
        }
    }

    pub fn save(&self, dir: &Path) -> io::Result<()> {
        snapshot::write_jsonl(&dir.join("episodes.jsonl"), self.episodic.read().all())?;
        snapshot::write_jsonl(&dir.join("triples.jsonl"), self.semantic.read().all())?;
        snapshot::write_jsonl(&dir.join("procedures.jsonl"), self.procedural.read().all())?;
        let contexts = self.contexts.read();
        snapshot::write_jsonl(&dir.join("contexts.jsonl"), contexts.all())
    }

    pub fn load(&self, dir: &Path) -> io::Result<()> {
        let episodes: Vec<Episode> = snapshot::read_jsonl(&dir.join("episodes.jsonl"))?;
        let triples: Vec<Triple> = snapshot::read_jsonl(&dir.join("triples.jsonl"))?;
        let procedures: Vec<Procedure> = snapshot::read_jsonl(&dir.join("procedures.jsonl"))?;
        let contexts: Vec<UserContext> = snapshot::read_jsonl(&dir.join("contexts.jsonl"))?;
        let mut e = self.episodic.write();
        episodes.into_iter().for_each(|x| e.insert(x));
        let mut s = self.semantic.write();
        triples.into_iter().for_each(|x| s.insert(x));
        let mut p = self.procedural.write();
        procedures.into_iter().for_each(|x| p.insert(x));
        let mut c = self.contexts.write();
        contexts.into_iter().for_each(|x| c.insert(x));
        Ok(())
    }
}

/// Most frequent value; ties go to the smallest.
fn majority<T: Ord + Copy>(items: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for item in items {
        *counts.entry(item).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(t, _)| t)
}
