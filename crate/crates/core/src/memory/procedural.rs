use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cognition::Strategy;
use crate::perception::{Complexity, Intent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSignature {
    pub intent: Intent,
    pub complexity: Complexity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Procedure {
    pub task_signature: TaskSignature,
    pub strategy: Strategy,
    pub tools: Vec<String>,
    pub uses: u64,
    pub successes: u64,
    /// Store-local recency counter.
    pub last_used: u64,
}

impl Procedure {
    pub fn success_rate(&self) -> f64 {
        if self.uses == 0 {
            0.0
        } else {
            self.successes as f64 / self.uses as f64
        }
    }
}

#[derive(Debug, Default)]
pub struct ProceduralStore {
    procedures: Vec<Procedure>,
    clock: u64,
}

impl ProceduralStore {
    fn find(&mut self, sig: TaskSignature, tools: &[String]) -> Option<&mut Procedure> {
        self.procedures.iter_mut().find(|p| p.task_signature == sig && p.tools == tools)
    }

    /// Counts one use of `tools` for `sig`.
    pub fn record(&mut self, sig: TaskSignature, strategy: Strategy, tools: &[String], success: bool) {
        self.clock += 1;
        let clock = self.clock;
        if let Some(p) = self.find(sig, tools) {
            p.uses += 1;
            p.successes += u64::from(success);
            p.strategy = strategy;
            p.last_used = clock;
            return;
        }
        self.procedures.push(Procedure {
            task_signature: sig,
            strategy,
            tools: tools.to_vec(),
            uses: 1,
            successes: u64::from(success),
            last_used: clock,
        });
    }

    /// Raises counters to at least the observed group counts.
    pub fn refresh(&mut self, sig: TaskSignature, strategy: Strategy, tools: &[String], uses: u64, successes: u64) {
        self.clock += 1;
        let clock = self.clock;
        let successes = successes.min(uses);
        if let Some(p) = self.find(sig, tools) {
            p.uses = p.uses.max(uses);
            p.successes = p.successes.max(successes);
            p.last_used = clock;
            return;
        }
        self.procedures.push(Procedure {
            task_signature: sig,
            strategy,
            tools: tools.to_vec(),
            uses,
            successes,
            last_used: clock,
        });
    }

    pub fn insert(&mut self, p: Procedure) {
        self.clock = self.clock.max(p.last_used);
        self.procedures.push(p);
    }

    /// Highest success rate (exact rational compare), then more uses, then recency.
    pub fn best(&self, sig: TaskSignature) -> Option<&Procedure> {
        self.procedures
            .iter()
            .filter(|p| p.task_signature == sig && p.uses >= 1)
            .max_by(|a, b| compare_rate(a, b).then(a.uses.cmp(&b.uses)).then(a.last_used.cmp(&b.last_used)))
    }

    pub fn all(&self) -> &[Procedure] {
        &self.procedures
    }

    pub fn len(&self) -> usize {
        self.procedures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.procedures.is_empty()
    }
}

fn compare_rate(a: &Procedure, b: &Procedure) -> Ordering {
    (u128::from(a.successes) * u128::from(b.uses)).cmp(&(u128::from(b.successes) * u128::from(a.uses)))
}
