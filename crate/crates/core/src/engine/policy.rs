use std::collections::BTreeMap;
use std::sync::Arc;

use crate::graph::Codelet;
use crate::trace::Time;

/// Orders a cluster's ready queue. Smaller keys dispatch first; equal keys
/// fall back to ascending codelet id.
pub trait SchedulingPolicy: Send + Sync {
    fn name(&self) -> &str;

    fn key(&self, codelet: &Codelet, enabled_at: Time, duration: Time) -> u64;
}

/// First come, first served by enable time.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fifo;

impl SchedulingPolicy for Fifo {
    fn name(&self) -> &str {
        "fifo"
    }

    fn key(&self, _codelet: &Codelet, enabled_at: Time, _duration: Time) -> u64 {
        enabled_at
    }
}

#[derive(Clone)]
pub struct PolicyRegistry {
    policies: BTreeMap<String, Arc<dyn SchedulingPolicy>>,
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        PolicyRegistry {
            policies: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, policy: Arc<dyn SchedulingPolicy>) {
        self.policies.insert(policy.name().to_string(), policy);
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn SchedulingPolicy>> {
        self.policies.get(id).cloned()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.policies.keys().map(String::as_str)
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Fifo));
        r
    }
}

impl std::fmt::Debug for PolicyRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.policies.keys()).finish()
    }
}
