//! Discrete-event execution of a codelet graph on a machine.
//!
//! One centralized loop. At each instant:
//!
//! 1. completions due now are retired and their out-edges satisfied;
//! 2. every codelet that becomes Enabled and is pipeline-enabled satisfies
//!    its own out-edges on the spot, recursively;
//! 3. each cluster (ascending id) hands its ready queue, front to back, to
//!    the lowest-id idle compatible compute unit;
//! 4. time jumps to the next completion.
//!
//! Signalling and scheduling take no time. Zero-duration codelets complete
//! at their dispatch instant and re-enter step 1 without advancing time.

mod policy;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::delay::{effective_duration, DelayError, Multipliers};
use crate::graph::{
    validate_graph, ClusterId, CodeletGraph, CodeletId, CodeletState, ResourceClass, RunState, SignalError,
    ValidationReport,
};
use crate::machine::{CuId, Machine};
use crate::trace::{ConfigEcho, SimResult, Time, TraceRecord};

pub use policy::{Fifo, PolicyRegistry, SchedulingPolicy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub pipelining: bool,
    pub chiplets: bool,
    pub policy: String,
    pub multipliers: Multipliers,
}

impl SimConfig {
    pub fn new(pipelining: bool, chiplets: bool) -> Self {
        SimConfig {
            pipelining,
            chiplets,
            policy: "fifo".to_string(),
            multipliers: Multipliers::chiplet_defaults(),
        }
    }

    pub fn with_multipliers(mut self, multipliers: Multipliers) -> Self {
        self.multipliers = multipliers;
        self
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::new(false, false)
    }
}

/// Why a codelet never finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StuckReason {
    /// Still waiting on `remaining` dependencies.
    UnsatisfiedDeps { remaining: u32 },
    /// Enabled, but its cluster has no compute unit of this class.
    NoCompatibleCu { class: ResourceClass },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StuckCodelet {
    pub codelet: CodeletId,
    pub state: CodeletState,
    pub reason: StuckReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlockReport {
    pub time: Time,
    pub stuck: Vec<StuckCodelet>,
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} codelet(s) stuck at t={}", self.stuck.len(), self.time)?;
        for s in self.stuck.iter().take(8) {
            match &s.reason {
                StuckReason::UnsatisfiedDeps { remaining } => {
                    write!(f, "; {} waiting on {remaining} dependencies", s.codelet)?
                }
                StuckReason::NoCompatibleCu { class } => write!(f, "; {} has no {class} unit", s.codelet)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("graph failed validation: {0}")]
    InvalidGraph(ValidationReport),
    #[error("codelet {codelet} needs a {class} unit but its cluster has none")]
    ClassUnavailable { codelet: CodeletId, class: ResourceClass },
    #[error("codelet {codelet} is bound to a cluster the machine does not have")]
    ClusterUnavailable { codelet: CodeletId },
    #[error("unknown scheduling policy '{0}'")]
    UnknownPolicy(String),
    #[error("run state must start with every codelet Dormant")]
    StateNotFresh,
    #[error("deadlock: {0}")]
    Deadlock(DeadlockReport),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Validates the graph, checks every codelet can be placed, and runs it
/// from a fresh state at time 0.
pub fn run(graph: &CodeletGraph, machine: &Machine, config: &SimConfig) -> Result<SimResult, SimError> {
    let report = validate_graph(graph);
    if !report.is_ok() {
        return Err(SimError::InvalidGraph(report));
    }
    check_placement(graph, machine, config)?;
    Simulation::new(graph, machine, config)?.run()
}

/// Every codelet's cluster exists and (with chiplets on) holds a unit of
/// the codelet's class.
pub fn check_placement(graph: &CodeletGraph, machine: &Machine, config: &SimConfig) -> Result<(), SimError> {
    for c in graph.codelets() {
        let cluster = graph
            .cluster_of(c.id)
            .filter(|&cl| machine.cluster(cl).is_some())
            .ok_or(SimError::ClusterUnavailable { codelet: c.id })?;
        if config.chiplets && !machine.has_class_in(cluster, &c.resource_class) {
            return Err(SimError::ClassUnavailable {
                codelet: c.id,
                class: c.resource_class.clone(),
            });
        }
    }
    Ok(())
}

/// Lists every unfinished codelet and why it is stuck. Meaningful once the
/// event queue has drained.
pub fn detect_deadlock(graph: &CodeletGraph, state: &RunState) -> Vec<StuckCodelet> {
    graph
        .codelets()
        .iter()
        .filter_map(|c| {
            let st = state.state(c.id);
            let reason = match st {
                CodeletState::Done => return None,
                CodeletState::Dormant => StuckReason::UnsatisfiedDeps {
                    remaining: state.slot(c.id).current_count,
                },
                _ => StuckReason::NoCompatibleCu {
                    class: c.resource_class.clone(),
                },
            };
            Some(StuckCodelet {
                codelet: c.id,
                state: st,
                reason,
            })
        })
        .collect()
}

/// One run in progress. Use [`run`] unless the run needs a custom policy
/// registry, a resumed [`RunState`], or must skip the placement check.
pub struct Simulation<'a> {
    graph: &'a CodeletGraph,
    machine: &'a Machine,
    config: &'a SimConfig,
    policy: Arc<dyn SchedulingPolicy>,
    state: RunState,
    origin: Time,
    now: Time,
    durations: Vec<Time>,
    /// Index into `machine.clusters()` for each codelet.
    home: Vec<usize>,
    ready: Vec<BTreeSet<(u64, CodeletId)>>,
    idle: Vec<BTreeMap<ResourceClass, BTreeSet<CuId>>>,
    events: BinaryHeap<Reverse<(Time, CodeletId)>>,
    running: Vec<Option<(CuId, Time)>>,
    records: Vec<TraceRecord>,
    enabled_at: Vec<Time>,
    pipelined_edges: Vec<bool>,
}

impl<'a> Simulation<'a> {
    pub fn new(graph: &'a CodeletGraph, machine: &'a Machine, config: &'a SimConfig) -> Result<Self, SimError> {
        Self::resume(
            graph,
            machine,
            config,
            &PolicyRegistry::default(),
            RunState::new(graph),
            0,
        )
    }

    /// Starts from an existing run state (all codelets Dormant, e.g. after
    /// [`RunState::reset_all`]) with time beginning at `origin`.
    pub fn resume(
        graph: &'a CodeletGraph,
        machine: &'a Machine,
        config: &'a SimConfig,
        registry: &PolicyRegistry,
        state: RunState,
        origin: Time,
    ) -> Result<Self, SimError> {
        let policy = registry
            .get(&config.policy)
            .ok_or_else(|| SimError::UnknownPolicy(config.policy.clone()))?;
        if graph
            .codelets()
            .iter()
            .any(|c| state.state(c.id) != CodeletState::Dormant)
        {
            return Err(SimError::StateNotFresh);
        }

        let cluster_pos: BTreeMap<ClusterId, usize> =
            machine.clusters().iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        let mut home = Vec::with_capacity(graph.len());
        let mut durations = Vec::with_capacity(graph.len());
        for c in graph.codelets() {
            let pos = graph
                .cluster_of(c.id)
                .and_then(|cl| cluster_pos.get(&cl).copied())
                .ok_or(SimError::ClusterUnavailable { codelet: c.id })?;
            home.push(pos);
            durations.push(effective_duration(
                c.base_cost,
                &c.resource_class,
                config.chiplets,
                &config.multipliers,
            )?);
        }

        let mut idle: Vec<BTreeMap<ResourceClass, BTreeSet<CuId>>> = vec![BTreeMap::new(); machine.clusters().len()];
        for (pos, cluster) in machine.clusters().iter().enumerate() {
            for &cu in &cluster.cus {
                let bucket = bucket(config, &machine.cu(cu).class);
                idle[pos].entry(bucket).or_default().insert(cu);
            }
        }

        Ok(Simulation {
            graph,
            machine,
            config,
            policy,
            state,
            origin,
            now: origin,
            durations,
            home,
            ready: vec![BTreeSet::new(); machine.clusters().len()],
            idle,
            events: BinaryHeap::new(),
            running: vec![None; graph.len()],
            records: Vec::with_capacity(graph.len()),
            enabled_at: vec![0; graph.len()],
            pipelined_edges: vec![false; graph.edges().len()],
        })
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn into_state(self) -> RunState {
        self.state
    }

    pub fn run(&mut self) -> Result<SimResult, SimError> {
        let sources: Vec<CodeletId> = self
            .graph
            .codelets()
            .iter()
            .filter(|c| self.state.slot(c.id).is_satisfied())
            .map(|c| c.id)
            .collect();
        for id in sources {
            self.state.transition(id, CodeletState::Enabled)?;
            self.on_enabled(id)?;
        }

        loop {
            while let Some(&Reverse((t, id))) = self.events.peek() {
                if t != self.now {
                    break;
                }
                self.events.pop();
                self.complete(id)?;
            }
            self.dispatch()?;
            match self.events.peek() {
                Some(&Reverse((t, _))) => self.now = t,
                None => break,
            }
        }

        if !self.state.all_done() {
            return Err(SimError::Deadlock(DeadlockReport {
                time: self.now,
                stuck: detect_deadlock(self.graph, &self.state),
            }));
        }
        Ok(self.result())
    }

    /// Handles a codelet that just became Enabled: queues it and, when
    /// pipelining applies, enables its consumers in the same instant.
    fn on_enabled(&mut self, first: CodeletId) -> Result<(), SimError> {
        let mut work = vec![first];
        while let Some(id) = work.pop() {
            self.enabled_at[id.index()] = self.now;
            let key = self
                .policy
                .key(self.graph.codelet(id), self.now, self.durations[id.index()]);
            self.ready[self.home[id.index()]].insert((key, id));

            if self.config.pipelining && self.graph.codelet(id).pipeline_enabled {
                for &e in self.graph.out_edges(id) {
                    if self.state.is_satisfied(e) {
                        continue;
                    }
                    self.pipelined_edges[e] = true;
                    if self.state.satisfy_edge(self.graph, e)?.became_enabled {
                        work.push(self.graph.edge(e).consumer);
                    }
                }
            }
        }
        Ok(())
    }

    fn complete(&mut self, id: CodeletId) -> Result<(), SimError> {
        self.state.transition(id, CodeletState::Done)?;
        let (cu, start) = self.running[id.index()].take().expect("completed codelet was running");
        let c = self.graph.codelet(id);
        self.records.push(TraceRecord {
            codelet: id,
            label: c.label.clone(),
            kind: c.kind.clone(),
            cu,
            start,
            end: self.now,
        });
        let b = bucket(self.config, &self.machine.cu(cu).class);
        self.idle[self.home[id.index()]].entry(b).or_default().insert(cu);

        for &e in self.graph.out_edges(id) {
            if self.state.is_satisfied(e) {
                continue;
            }
            if self.state.satisfy_edge(self.graph, e)?.became_enabled {
                self.on_enabled(self.graph.edge(e).consumer)?;
            }
        }
        Ok(())
    }

    fn dispatch(&mut self) -> Result<(), SimError> {
        for pos in 0..self.ready.len() {
            let mut free: usize = self.idle[pos].values().map(BTreeSet::len).sum();
            if free == 0 || self.ready[pos].is_empty() {
                continue;
            }
            let mut chosen = Vec::new();
            for &(key, id) in &self.ready[pos] {
                let b = bucket(self.config, &self.graph.codelet(id).resource_class);
                let Some(units) = self.idle[pos].get_mut(&b) else {
                    continue;
                };
                if let Some(cu) = units.pop_first() {
                    chosen.push((key, id, cu));
                    free -= 1;
                    if free == 0 {
                        break;
                    }
                }
            }
            for (key, id, cu) in chosen {
                self.ready[pos].remove(&(key, id));
                self.state.transition(id, CodeletState::Ready)?;
                self.state.transition(id, CodeletState::Active)?;
                self.running[id.index()] = Some((cu, self.now));
                self.events.push(Reverse((self.now + self.durations[id.index()], id)));
            }
        }
        Ok(())
    }

    fn result(&self) -> SimResult {
        let mut records = self.records.clone();
        records.sort_by_key(|r| (r.start, r.codelet));
        let mut busy = vec![0; self.machine.total_cus()];
        for r in &records {
            busy[r.cu.index()] += r.duration();
        }
        let makespan = records.iter().map(|r| r.end).max().unwrap_or(self.origin);
        SimResult {
            records,
            makespan,
            busy,
            enabled_at: self.enabled_at.clone(),
            pipelined_edges: self.pipelined_edges.clone(),
            origin: self.origin,
            config: ConfigEcho {
                graph: self.graph.name.clone(),
                tiles: self.graph.tiles,
                pipelining: self.config.pipelining,
                chiplets: self.config.chiplets,
                policy: self.config.policy.clone(),
                cu_counts: self
                    .machine
                    .class_counts()
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect(),
            },
        }
    }
}

/// Dispatch compatibility bucket: exact class with chiplets on, a single
/// shared bucket otherwise.
fn bucket(config: &SimConfig, class: &ResourceClass) -> ResourceClass {
    if config.chiplets {
        class.clone()
    } else {
        ResourceClass::Conventional
    }
}
