use std::collections::HashMap;
use std::io;
use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use super::{learn, CallerProfile, Signals};
use crate::snapshot;

/// Concurrent profile store. Reads clone; updates for one caller are
/// serialized through that caller's mutex (atomic read-modify-write).
#[derive(Debug, Default)]
pub struct ProfileStore {
    profiles: RwLock<HashMap<String, Arc<Mutex<CallerProfile>>>>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// The stored profile, or a fresh one for unknown callers.
    pub fn get(&self, caller_id: &str) -> CallerProfile {
        self.profiles.read().get(caller_id).map(|p| p.lock().clone()).unwrap_or_else(|| CallerProfile::fresh(caller_id))
    }

    pub fn contains(&self, caller_id: &str) -> bool {
        self.profiles.read().contains_key(caller_id)
    }

    fn slot(&self, caller_id: &str) -> Arc<Mutex<CallerProfile>> {
        if let Some(slot) = self.profiles.read().get(caller_id) {
            return slot.clone();
        }
        self.profiles
            .write()
            .entry(caller_id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(CallerProfile::fresh(caller_id))))
            .clone()
    }

    /// Applies [`learn`] under the caller's lock and returns the new profile.
    pub fn learn(&self, caller_id: &str, signals: &Signals, alpha: f64) -> CallerProfile {
        let slot = self.slot(caller_id);
        let mut guard = slot.lock();
        *guard = learn(&guard, signals, alpha);
        guard.clone()
    }

    pub fn remove(&self, caller_id: &str) -> bool {
        self.profiles.write().remove(caller_id).is_some()
    }

    pub fn len(&self) -> usize {
        self.profiles.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All profiles sorted by caller id.
    pub fn all(&self) -> Vec<CallerProfile> {
        let mut out: Vec<CallerProfile> = self.profiles.read().values().map(|p| p.lock().clone()).collect();
        out.sort_by(|a, b| a.caller_id.cmp(&b.caller_id));
        out
    }

    pub fn insert(&self, profile: CallerProfile) {
        self.profiles.write().insert(profile.caller_id.clone(), Arc::new(Mutex::new(profile)));
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        snapshot::write_jsonl(path, &self.all())
    }

    pub fn load(&self, path: &Path) -> io::Result<usize> {
        let records: Vec<CallerProfile> = snapshot::read_jsonl(path)?;
        let n = records.len();
        for p in records {
            self.insert(p);
        }
        Ok(n)
    }
}
