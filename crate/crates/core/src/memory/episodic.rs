use std::cmp::Ordering;
use std::collections::BinaryHeap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::embedding::{cosine, embed};
use crate::cognition::Strategy;
use crate::perception::{Complexity, EntityKind, Intent};
use crate::toolhub::ToolCall;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionSummary {
    pub intent: Intent,
    pub complexity: Complexity,
    pub entity_kinds: Vec<EntityKind>,
    pub domain_hints: Vec<String>,
    pub urgency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u64,
    pub caller_id: String,
    pub timestamp: DateTime<Utc>,
    pub message_digest: String,
    pub perception: PerceptionSummary,
    pub strategy: Option<Strategy>,
    /// Ordered tool names joined by `>`; empty when no tool ran.
    pub action_key: String,
    /// The executed tool calls with the message text replaced by `{{message}}`.
    pub actions: Vec<ToolCall>,
    pub outcome: Outcome,
    pub importance: f64,
    pub embedding: Vec<f64>,
}

/// What the pipeline hands over; id, importance and embedding are derived.
#[derive(Debug, Clone)]
pub struct EpisodeDraft {
    pub caller_id: String,
    pub message: String,
    pub perception: PerceptionSummary,
    pub strategy: Option<Strategy>,
    pub actions: Vec<ToolCall>,
    pub success: bool,
}

pub fn action_key(actions: &[ToolCall]) -> String {
    actions.iter().map(|a| a.tool.as_str()).collect::<Vec<_>>().join(">")
}

/// `0.5·urgency + 0.3·success + 0.2·novelty`, clamped to [0, 1].
pub fn importance(urgency: f64, success: bool, novelty: f64) -> f64 {
    let s = if success { 1.0 } else { 0.0 };
    (0.5 * urgency.clamp(0.0, 1.0) + 0.3 * s + 0.2 * novelty.clamp(0.0, 1.0)).clamp(0.0, 1.0)
}

#[derive(Debug, Default)]
pub struct EpisodicStore {
    episodes: Vec<Episode>,
    next_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    cosine: f64,
    id: u64,
    index: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    // "better" compares greater: higher cosine, then newer id
    fn cmp(&self, other: &Self) -> Ordering {
        self.cosine.total_cmp(&other.cosine).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl EpisodicStore {
    pub fn record(&mut self, draft: EpisodeDraft) -> Episode {
        let embedding = embed(&draft.message);
        let max_cos = self
            .episodes
            .iter()
            .map(|e| cosine(&e.embedding, &embedding))
            .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
        let novelty = 1.0 - max_cos.unwrap_or(0.0);
        self.next_id += 1;
        let episode = Episode {
            id: self.next_id,
            caller_id: draft.caller_id,
            timestamp: Utc::now(),
            message_digest: crate::text::excerpt(&draft.message, 280),
            importance: importance(draft.perception.urgency, draft.success, novelty),
            perception: draft.perception,
            strategy: draft.strategy,
            action_key: action_key(&draft.actions),
            actions: draft.actions,
            outcome: Outcome { success: draft.success },
            embedding,
        };
        self.episodes.push(episode.clone());
        episode
    }

    /// Inserts a fully formed episode (snapshot restore, fixtures).
    pub fn insert(&mut self, episode: Episode) {
        self.next_id = self.next_id.max(episode.id);
        self.episodes.push(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn all(&self) -> &[Episode] {
        &self.episodes
    }

    /// The `n` most recent episodes, oldest first.
    pub fn recent(&self, n: usize) -> Vec<Episode> {
        let start = self.episodes.len().saturating_sub(n);
        self.episodes[start..].to_vec()
    }

    /// Top-k by cosine to the query embedding, ties broken by recency.
    pub fn recall_similar(&self, query: &str, k: usize) -> Vec<(Episode, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let q = embed(query);
        // min-heap of the k best seen so far
        let mut heap: BinaryHeap<std::cmp::Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for (index, e) in self.episodes.iter().enumerate() {
            let r = Ranked { cosine: cosine(&q, &e.embedding), id: e.id, index };
            if heap.len() < k {
                heap.push(std::cmp::Reverse(r));
            } else if let Some(std::cmp::Reverse(worst)) = heap.peek() {
                if r > *worst {
                    heap.pop();
                    heap.push(std::cmp::Reverse(r));
                }
            }
        }
        let mut ranked: Vec<Ranked> = heap.into_iter().map(|r| r.0).collect();
        ranked.sort_by(|a, b| b.cmp(a));
        ranked.into_iter().map(|r| (self.episodes[r.index].clone(), r.cosine)).collect()
    }

    /// Drops the lowest-importance episodes (oldest first on ties) down to `cap`.
    pub fn prune(&mut self, cap: usize) -> usize {
        let excess = self.episodes.len().saturating_sub(cap);
        if excess == 0 {
            return 0;
        }
        let mut order: Vec<usize> = (0..self.episodes.len()).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&self.episodes[a], &self.episodes[b]);
            ea.importance.total_cmp(&eb.importance).then(ea.id.cmp(&eb.id))
        });
        let mut doomed = vec![false; self.episodes.len()];
        for &i in &order[..excess] {
            doomed[i] = true;
        }
        let mut i = 0;
        self.episodes.retain(|_| {
            let keep = !doomed[i];
            i += 1;
            keep
        });
        excess
    }

    pub fn remove_caller(&mut self, caller_id: &str) -> usize {
        let before = self.episodes.len();
        self.episodes.retain(|e| e.caller_id != caller_id);
        before - self.episodes.len()
    }
}
