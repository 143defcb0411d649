//! JSON form of a Codelet graph.

use serde::{Deserialize, Serialize};

use super::{
    ClusterId, Codelet, CodeletGraph, CodeletId, CodeletState, Edge, GraphError, ResourceClass, SyncSlot, TpId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub name: String,
    pub tiles: Option<u32>,
    pub codelets: Vec<CodeletRecord>,
    pub edges: Vec<[u32; 2]>,
    pub tps: Vec<TpRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeletRecord {
    pub id: u32,
    pub label: String,
    pub kind: String,
    pub cost: u64,
    pub class: ResourceClass,
    pub pipeline: bool,
    pub tp: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpRecord {
    pub id: u32,
    pub cluster: u32,
}

fn check_dense(what: &'static str, ids: impl Iterator<Item = u32>) -> Result<Vec<usize>, GraphError> {
    let ids: Vec<u32> = ids.collect();
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    if sorted.iter().enumerate().any(|(i, &id)| id as usize != i) {
        return Err(GraphError::NonDenseIds { what, got: ids });
    }
    Ok(ids.into_iter().map(|i| i as usize).collect())
}

impl GraphFile {
    /// Converts to a graph. Slot reset counts are the in-degrees implied by
    /// the edge list; structural problems beyond id density are left for
    /// [`validate_graph`](super::validate_graph).
    pub fn into_graph(self) -> Result<CodeletGraph, GraphError> {
        let order = check_dense("codelet", self.codelets.iter().map(|c| c.id))?;
        check_dense("tp", self.tps.iter().map(|t| t.id))?;
        let n = self.codelets.len();

        let mut indegree = vec![0u32; n];
        for &[p, c] in &self.edges {
            if (p as usize) < n && (c as usize) < n {
                indegree[c as usize] += 1;
            }
        }

        let mut slots: Vec<Option<Codelet>> = vec![None; n];
        for (rec, pos) in self.codelets.into_iter().zip(order) {
            slots[pos] = Some(Codelet {
                id: CodeletId(rec.id),
                label: rec.label,
                kind: rec.kind,
                base_cost: rec.cost,
                resource_class: rec.class,
                pipeline_enabled: rec.pipeline,
                slot: SyncSlot::new(indegree[pos]),
                state: CodeletState::Dormant,
                tp: TpId(rec.tp),
            });
        }
        let codelets = slots.into_iter().map(|c| c.expect("dense ids")).collect();
        let edges = self
            .edges
            .into_iter()
            .map(|[p, c]| Edge {
                producer: CodeletId(p),
                consumer: CodeletId(c),
            })
            .collect();
        let mut tps: Vec<_> = self
            .tps
            .into_iter()
            .map(|t| (TpId(t.id), ClusterId(t.cluster)))
            .collect();
        tps.sort();
        Ok(CodeletGraph::from_parts(self.name, self.tiles, codelets, edges, tps))
    }

    pub fn from_graph(graph: &CodeletGraph) -> Self {
        GraphFile {
            name: graph.name.clone(),
            tiles: graph.tiles,
            codelets: graph
                .codelets()
                .iter()
                .map(|c| CodeletRecord {
                    id: c.id.0,
                    label: c.label.clone(),
                    kind: c.kind.clone(),
                    cost: c.base_cost,
                    class: c.resource_class.clone(),
                    pipeline: c.pipeline_enabled,
                    tp: c.tp.0,
                })
                .collect(),
            edges: graph.edges().iter().map(|e| [e.producer.0, e.consumer.0]).collect(),
            tps: graph
                .tps()
                .iter()
                .map(|t| TpRecord {
                    id: t.id.0,
                    cluster: t.cluster.0,
                })
                .collect(),
        }
    }
}

impl CodeletGraph {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        file.into_graph()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from_graph(self)).expect("graph serializes")
    }
}
