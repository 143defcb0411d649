//! Codelet graphs: nodes, dependency arcs, threaded procedures and the
//! structural checks every simulation relies on.

mod file;
mod state;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{CodeletRecord, GraphFile, TpRecord};
pub use state::{reset_codelet, RunState, SignalError, SignalOutcome};

/// Index of a codelet inside its graph. Ids are dense `0..N` and the
/// numeric order is the canonical order used for every tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodeletId(pub u32);

impl CodeletId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CodeletId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TpId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cluster {}", self.0)
    }
}

/// The kind of compute unit a codelet targets.
///
/// `Conventional` sorts before every chiplet class; chiplet classes sort by
/// name. Chiplet names are compared by exact string match.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ResourceClass {
    Conventional,
    Chiplet(String),
}

pub const TPU_LIKE: &str = "tpu-like";
pub const UDP_LIKE: &str = "udp-like";

impl ResourceClass {
    pub fn chiplet(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        if name.is_empty() {
            return Err(GraphError::EmptyChipletName);
        }
        if name == "conventional" {
            return Ok(ResourceClass::Conventional);
        }
        Ok(ResourceClass::Chiplet(name))
    }

    pub fn tpu_like() -> Self {
        ResourceClass::Chiplet(TPU_LIKE.to_string())
    }

    pub fn udp_like() -> Self {
        ResourceClass::Chiplet(UDP_LIKE.to_string())
    }

    pub fn is_chiplet(&self) -> bool {
        matches!(self, ResourceClass::Chiplet(_))
    }

    pub fn as_str(&self) -> &str {
        match self {
            ResourceClass::Conventional => "conventional",
            ResourceClass::Chiplet(name) => name,
        }
    }
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResourceClass {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResourceClass::chiplet(s)
    }
}

impl TryFrom<String> for ResourceClass {
    type Error = GraphError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ResourceClass::chiplet(value)
    }
}

impl From<ResourceClass> for String {
    fn from(value: ResourceClass) -> Self {
        value.as_str().to_string()
    }
}

/// Dependency counter of a codelet: the number of unmet dependencies and
/// the value it returns to on reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSlot {
    pub reset_count: u32,
    pub current_count: u32,
}

impl SyncSlot {
    pub fn new(reset_count: u32) -> Self {
        SyncSlot {
            reset_count,
            current_count: reset_count,
        }
    }

    pub fn is_satisfied(&self) -> bool {
        self.current_count == 0
    }
}

/// Lifecycle of a codelet within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CodeletState {
    /// Some dependency is still unmet.
    Dormant,
    /// All dependencies met, waiting for a compute unit.
    Enabled,
    /// A compute unit has been chosen.
    Ready,
    /// Executing; cannot be interrupted.
    Active,
    Done,
}

impl CodeletState {
    /// Whether `self -> to` is a legal lifecycle step.
    pub fn can_transition(self, to: CodeletState) -> bool {
        use CodeletState::*;
        matches!(
            (self, to),
            (Dormant, Enabled) | (Enabled, Ready) | (Ready, Active) | (Active, Done) | (Done, Dormant)
        )
    }
}

impl fmt::Display for CodeletState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A node of the program graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codelet {
    pub id: CodeletId,
    pub label: String,
    /// Cost family tag, e.g. `conv`, `vmul`, `sum`, `dot`, `start`, `end`.
    pub kind: String,
    /// Duration on a conventional compute unit, in time units.
    pub base_cost: u64,
    pub resource_class: ResourceClass,
    pub pipeline_enabled: bool,
    pub slot: SyncSlot,
    pub state: CodeletState,
    pub tp: TpId,
}

/// A dependency arc. Satisfaction is per-run state and lives in [`RunState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub producer: CodeletId,
    pub consumer: CodeletId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadedProcedure {
    pub id: TpId,
    pub cluster: ClusterId,
    pub members: Vec<CodeletId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("chiplet class name must not be empty")]
    EmptyChipletName,
    #[error("cycle detected: {}", format_cycle(.0))]
    CycleDetected(Vec<CodeletId>),
    #[error("{what} ids must be dense from 0 (got {got:?})")]
    NonDenseIds { what: &'static str, got: Vec<u32> },
    #[error("malformed graph file: {0}")]
    Parse(String),
}

fn format_cycle(cycle: &[CodeletId]) -> String {
    let mut parts: Vec<String> = cycle.iter().map(|c| c.to_string()).collect();
    if let Some(first) = cycle.first() {
        parts.push(first.to_string());
    }
    parts.join(" -> ")
}

/// One structural problem found by [`validate_graph`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    #[error("cycle detected: {}", format_cycle(.0))]
    CycleDetected(Vec<CodeletId>),
    #[error("codelet {codelet}: slot reset count {actual} but in-degree {expected}")]
    SlotMismatch {
        codelet: CodeletId,
        expected: u32,
        actual: u32,
    },
    #[error("edge {producer} -> {consumer} references a missing codelet")]
    DanglingEdge { producer: CodeletId, consumer: CodeletId },
    #[error("edge {producer} -> {consumer} appears more than once")]
    DuplicateEdge { producer: CodeletId, consumer: CodeletId },
    #[error("codelet {0} belongs to no threaded procedure")]
    OrphanCodelet(CodeletId),
    #[error("threaded procedure {0} declared more than once")]
    DuplicateTp(u32),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A Codelet program graph. Immutable once built; per-run mutation goes
/// through [`RunState`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeletGraph {
    pub name: String,
    /// Tile count the graph was generated for, if any.
    pub tiles: Option<u32>,
    codelets: Vec<Codelet>,
    edges: Vec<Edge>,
    tps: Vec<ThreadedProcedure>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl CodeletGraph {
    /// Assembles a graph from parts without checking it. TP member lists
    /// are recomputed from each codelet's `tp`. Edges whose endpoints do
    /// not exist are kept (so [`validate_graph`] can report them) but are
    /// left out of the adjacency lists.
    pub fn from_parts(
        name: impl Into<String>,
        tiles: Option<u32>,
        codelets: Vec<Codelet>,
        edges: Vec<Edge>,
        tps: Vec<(TpId, ClusterId)>,
    ) -> Self {
        let n = codelets.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.producer.index() < n && e.consumer.index() < n {
                out_edges[e.producer.index()].push(i);
                in_edges[e.consumer.index()].push(i);
            }
        }
        let tps = tps
            .into_iter()
            .map(|(id, cluster)| ThreadedProcedure {
                id,
                cluster,
                members: codelets.iter().filter(|c| c.tp == id).map(|c| c.id).collect(),
            })
            .collect();
        CodeletGraph {
            name: name.into(),
            tiles,
            codelets,
            edges,
            tps,
            out_edges,
            in_edges,
        }
    }

    pub fn len(&self) -> usize {
        self.codelets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codelets.is_empty()
    }

    pub fn codelets(&self) -> &[Codelet] {
        &self.codelets
    }

    pub fn codelet(&self, id: CodeletId) -> &Codelet {
        &self.codelets[id.index()]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> Edge {
        self.edges[index]
    }

    pub fn tps(&self) -> &[ThreadedProcedure] {
        &self.tps
    }

    pub fn tp(&self, id: TpId) -> Option<&ThreadedProcedure> {
        self.tps.iter().find(|tp| tp.id == id)
    }

    /// Indices (into [`edges`](Self::edges)) of the arcs leaving `id`.
    pub fn out_edges(&self, id: CodeletId) -> &[usize] {
        &self.out_edges[id.index()]
    }

    pub fn in_edges(&self, id: CodeletId) -> &[usize] {
        &self.in_edges[id.index()]
    }

    pub fn in_degree(&self, id: CodeletId) -> u32 {
        self.in_edges[id.index()].len() as u32
    }

    pub fn successors(&self, id: CodeletId) -> impl Iterator<Item = CodeletId> + '_ {
        self.out_edges(id).iter().map(|&e| self.edges[e].consumer)
    }

    /// Cluster the codelet's TP is bound to.
    pub fn cluster_of(&self, id: CodeletId) -> Option<ClusterId> {
        self.tp(self.codelet(id).tp).map(|tp| tp.cluster)
    }
}

/// Incremental constructor for programmatic graphs. Slot reset counts are
/// derived from the final in-degrees.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    name: String,
    tiles: Option<u32>,
    codelets: Vec<Codelet>,
    edges: Vec<Edge>,
    tps: Vec<(TpId, ClusterId)>,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        GraphBuilder {
            name: name.into(),
            tiles: None,
            codelets: Vec::new(),
            edges: Vec::new(),
            tps: vec![(TpId(0), ClusterId(0))],
        }
    }

    pub fn tiles(mut self, tiles: u32) -> Self {
        self.tiles = Some(tiles);
        self
    }

    /// Replaces the default single TP on cluster 0.
    pub fn tps(mut self, tps: Vec<(TpId, ClusterId)>) -> Self {
        self.tps = tps;
        self
    }

    /// Adds a conventional, non-pipelined codelet in TP 0.
    pub fn codelet(&mut self, label: impl Into<String>, kind: impl Into<String>, cost: u64) -> CodeletId {
        let id = CodeletId(self.codelets.len() as u32);
        self.codelets.push(Codelet {
            id,
            label: label.into(),
            kind: kind.into(),
            base_cost: cost,
            resource_class: ResourceClass::Conventional,
            pipeline_enabled: false,
            slot: SyncSlot::new(0),
            state: CodeletState::Dormant,
            tp: TpId(0),
        });
        id
    }

    pub fn get_mut(&mut self, id: CodeletId) -> &mut Codelet {
        &mut self.codelets[id.index()]
    }

    pub fn edge(&mut self, producer: CodeletId, consumer: CodeletId) -> &mut Self {
        self.edges.push(Edge { producer, consumer });
        self
    }

    pub fn build(mut self) -> CodeletGraph {
        let n = self.codelets.len();
        let mut indegree = vec![0u32; n];
        for e in &self.edges {
            if e.consumer.index() < n && e.producer.index() < n {
                indegree[e.consumer.index()] += 1;
            }
        }
        for (c, d) in self.codelets.iter_mut().zip(indegree) {
            c.slot = SyncSlot::new(d);
        }
        CodeletGraph::from_parts(self.name, self.tiles, self.codelets, self.edges, self.tps)
    }
}

/// Checks acyclicity, slot/in-degree agreement, edge endpoints and TP
/// membership. Every problem found is reported, not just the first.
pub fn validate_graph(graph: &CodeletGraph) -> ValidationReport {
    let n = graph.len();
    let mut violations = Vec::new();

    let mut seen_pairs = BTreeSet::new();
    for e in graph.edges() {
        if e.producer.index() >= n || e.consumer.index() >= n {
            violations.push(Violation::DanglingEdge {
                producer: e.producer,
                consumer: e.consumer,
            });
        } else if !seen_pairs.insert((e.producer, e.consumer)) {
            violations.push(Violation::DuplicateEdge {
                producer: e.producer,
                consumer: e.consumer,
            });
        }
    }

    let mut seen_tps = BTreeSet::new();
    for tp in graph.tps() {
        if !seen_tps.insert(tp.id) {
            violations.push(Violation::DuplicateTp(tp.id.0));
        }
    }

    for c in graph.codelets() {
        let expected = graph.in_degree(c.id);
        if c.slot.reset_count != expected {
            violations.push(Violation::SlotMismatch {
                codelet: c.id,
                expected,
                actual: c.slot.reset_count,
            });
        }
        if !seen_tps.contains(&c.tp) {
            violations.push(Violation::OrphanCodelet(c.id));
        }
    }

    if let Err(GraphError::CycleDetected(cycle)) = topo_order(graph) {
        violations.push(Violation::CycleDetected(cycle));
    }

    ValidationReport { violations }
}

/// Kahn's algorithm with a min-heap, so ties resolve by ascending id.
pub fn topo_order(graph: &CodeletGraph) -> Result<Vec<CodeletId>, GraphError> {
    let n = graph.len();
    let mut indegree: Vec<u32> = (0..n).map(|i| graph.in_degree(CodeletId(i as u32))).collect();
    let mut heap: BinaryHeap<Reverse<CodeletId>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| Reverse(CodeletId(i as u32)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(id)) = heap.pop() {
        order.push(id);
        for succ in graph.successors(id) {
            let d = &mut indegree[succ.index()];
            *d -= 1;
            if *d == 0 {
                heap.push(Reverse(succ));
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err(GraphError::CycleDetected(find_cycle(graph, &indegree)))
    }
}

/// Every node left with a positive in-degree after Kahn's pass has a
/// predecessor that is also left, so walking predecessors must revisit a
/// node. The revisited stretch is a cycle.
fn find_cycle(graph: &CodeletGraph, remaining: &[u32]) -> Vec<CodeletId> {
    let start = remaining
        .iter()
        .position(|&d| d > 0)
        .map(|i| CodeletId(i as u32))
        .expect("cycle search called on an acyclic graph");
    let mut position = vec![usize::MAX; graph.len()];
    let mut walk = Vec::new();
    let mut cur = start;
    loop {
        if position[cur.index()] != usize::MAX {
            let mut cycle = walk.split_off(position[cur.index()]);
            cycle.reverse();
            return cycle;
        }
        position[cur.index()] = walk.len();
        walk.push(cur);
        cur = graph
            .in_edges(cur)
            .iter()
            .map(|&e| graph.edge(e).producer)
            .find(|p| remaining[p.index()] > 0)
            .expect("remaining node without remaining predecessor");
    }
}
