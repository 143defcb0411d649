//! Simulation output: per-codelet placement records and run summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::CodeletId;
use crate::machine::CuId;

/// Integer simulation time, in time units.
pub type Time = u64;

/// Where and when one codelet ran. Serialized as
/// `{"codelet", "label", "cu", "start", "end"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub codelet: CodeletId,
    pub label: String,
    #[serde(skip)]
    pub kind: String,
    pub cu: CuId,
    pub start: Time,
    pub end: Time,
}

impl TraceRecord {
    pub fn duration(&self) -> Time {
        self.end - self.start
    }

    /// Kind tag, falling back to the label with its index suffix stripped
    /// (records read back from JSON carry no kind).
    pub fn kind_or_label(&self) -> &str {
        if !self.kind.is_empty() {
            return &self.kind;
        }
        self.label.trim_end_matches(|c: char| c.is_ascii_digit() || c == '.')
    }
}

/// Parameters a result was produced under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub graph: String,
    pub tiles: Option<u32>,
    pub pipelining: bool,
    pub chiplets: bool,
    pub policy: String,
    pub cu_counts: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    /// Sorted by `(start, codelet)`.
    pub records: Vec<TraceRecord>,
    pub makespan: Time,
    /// Busy time per compute unit, indexed by CU id.
    pub busy: Vec<Time>,
    /// Instant each codelet became Enabled, indexed by codelet id.
    pub enabled_at: Vec<Time>,
    /// Per edge: satisfied early by a pipelined producer rather than by its
    /// completion.
    pub pipelined_edges: Vec<bool>,
    /// Time the run started at (0 unless resumed after a reset).
    pub origin: Time,
    pub config: ConfigEcho,
}

impl SimResult {
    pub fn record(&self, id: CodeletId) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.codelet == id)
    }

    pub fn trace_json(&self) -> String {
        trace_to_json(&self.records)
    }
}

pub fn trace_to_json(records: &[TraceRecord]) -> String {
    serde_json::to_string_pretty(records).expect("trace serializes")
}

pub fn trace_from_json(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    serde_json::from_str(text)
}
