use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleSource {
    Extracted,
    Consolidated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub weight: u64,
    pub source: TripleSource,
}

type Key = (String, String, String);

fn canonical(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Knowledge triples, unique on exact (subject, predicate, object).
#[derive(Debug, Default)]
pub struct SemanticStore {
    triples: Vec<Triple>,
    index: HashMap<Key, usize>,
}

impl SemanticStore {
    fn key(t: &Triple) -> Key {
        (t.subject.clone(), t.predicate.clone(), t.object.clone())
    }

    fn reindex(&mut self) {
        self.index = self.triples.iter().enumerate().map(|(i, t)| (Self::key(t), i)).collect();
    }

    /// Adds `weight` to an existing exact triple or inserts a new one.
    pub fn record(&mut self, subject: &str, predicate: &str, object: &str, source: TripleSource, weight: u64) {
        let key = (subject.to_string(), predicate.to_string(), object.to_string());
        match self.index.get(&key) {
            Some(&i) => self.triples[i].weight += weight.max(1),
            None => {
                self.index.insert(key, self.triples.len());
                self.triples.push(Triple {
                    subject: subject.to_string(),
                    predicate: predicate.to_string(),
                    object: object.to_string(),
                    weight: weight.max(1),
                    source,
                });
            }
        }
    }

    /// Raises an existing triple's weight to at least `weight` (inserting if absent).
    pub fn refresh(&mut self, subject: &str, predicate: &str, object: &str, weight: u64) {
        let key = (subject.to_string(), predicate.to_string(), object.to_string());
        match self.index.get(&key) {
            Some(&i) => {
                let t = &mut self.triples[i];
                t.weight = t.weight.max(weight);
            }
            None => self.record(subject, predicate, object, TripleSource::Consolidated, weight),
        }
    }

    pub fn insert(&mut self, triple: Triple) {
        let w = triple.weight;
        self.record(&triple.subject, &triple.predicate, &triple.object, triple.source, w);
    }

    /// Merges triples that are identical up to case and whitespace, summing
    /// weights into the earliest one. Returns how many were merged away.
    pub fn deduplicate(&mut self) -> usize {
        let before = self.triples.len();
        let mut seen: HashMap<Key, usize> = HashMap::new();
        let mut merged: Vec<Triple> = Vec::with_capacity(self.triples.len());
        for t in self.triples.drain(..) {
            let key = (canonical(&t.subject), canonical(&t.predicate), canonical(&t.object));
            match seen.get(&key) {
                Some(&i) => merged[i].weight += t.weight,
                None => {
                    seen.insert(key, merged.len());
                    merged.push(t);
                }
            }
        }
        self.triples = merged;
        self.reindex();
        before - self.triples.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.triples.iter().map(|t| t.weight).sum()
    }

    pub fn all(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn remove_subject(&mut self, subject: &str) -> usize {
        let before = self.triples.len();
        self.triples.retain(|t| t.subject != subject);
        self.reindex();
        before - self.triples.len()
    }
}
