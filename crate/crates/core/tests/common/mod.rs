//! Shared test support: random DAGs, a unit-step reference simulator, and
//! trace invariant checks.
#![allow(dead_code)]

use camsim_core::graph::{CodeletGraph, CodeletId, GraphBuilder, ResourceClass};
use camsim_core::machine::{build_machine, ClusterSpec, CuGroup, Machine, MachineSpec};
use camsim_core::{SimConfig, SimResult};
use rand::Rng;

/// Random case for engine/reference comparison.
#[derive(Debug, Clone)]
pub struct Case {
    pub graph: CodeletGraph,
    pub machine: Machine,
    pub config: SimConfig,
}

/// Up to `max_codelets` codelets, costs 0..=`max_cost`, 1 or 2 CUs, random
/// edges (forward in id order), random pipeline flags and switches. With
/// chiplets on, each CU gets a random class and codelets only use classes
/// the machine has.
pub fn random_case(rng: &mut impl Rng, max_codelets: usize, max_cost: u64) -> Case {
    let n = rng.random_range(1..=max_codelets);
    let cus = rng.random_range(1..=2u32);
    let chiplets = rng.random_bool(0.3);
    let pipelining = rng.random_bool(0.6);
    let classes = [
        ResourceClass::Conventional,
        ResourceClass::tpu_like(),
        ResourceClass::udp_like(),
    ];

    let cu_classes: Vec<ResourceClass> = (0..cus)
        .map(|_| {
            if chiplets {
                classes[rng.random_range(0..3)].clone()
            } else {
                ResourceClass::Conventional
            }
        })
        .collect();
    let mut groups: Vec<CuGroup> = Vec::new();
    for class in &cu_classes {
        match groups.iter_mut().find(|g| &g.class == class) {
            Some(g) => g.count += 1,
            None => groups.push(CuGroup {
                class: class.clone(),
                count: 1,
            }),
        }
    }
    let spec = MachineSpec {
        clusters: vec![ClusterSpec { id: 0, cus: groups }],
        chiplets_enabled: chiplets,
        total_cus: None,
    };
    let machine = build_machine(&spec).expect("random machine");

    let mut b = GraphBuilder::new("random");
    let density = rng.random_range(0.1..0.7);
    for i in 0..n {
        let id = b.codelet(format!("c{i}"), "user", rng.random_range(0..=max_cost));
        let c = b.get_mut(id);
        c.pipeline_enabled = rng.random_bool(0.5);
        if chiplets {
            c.resource_class = cu_classes[rng.random_range(0..cu_classes.len())].clone();
        }
    }
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(density) {
                b.edge(CodeletId(i as u32), CodeletId(j as u32));
            }
        }
    }
    Case {
        graph: b.build(),
        machine,
        config: SimConfig::new(pipelining, chiplets),
    }
}

/// One codelet's placement in the reference run: `(codelet, cu, start, end)`.
pub type Placement = (u32, u32, u64, u64);

fn ref_duration(base: u64, class: &ResourceClass, chiplets: bool) -> u64 {
    let mult = match class.as_str() {
        "tpu-like" if chiplets => 30,
        "udp-like" if chiplets => 10,
        _ => 1,
    };
    if base == 0 {
        0
    } else {
        base.div_ceil(mult).max(1)
    }
}

/// Unit-step reference simulator for single-cluster graphs.
///
/// An edge counts as satisfied once its producer is done, or, with
/// pipelining on, once a flagged producer is enabled. A codelet is enabled
/// when all its in-edges are satisfied. At every integer time step it
/// retires finished codelets, hands enabled codelets (oldest enable time,
/// then lowest id) to the lowest-numbered idle compatible unit, and repeats
/// until nothing changes before moving to the next step. Returns None on
/// deadlock.
pub fn reference_run(g: &CodeletGraph, m: &Machine, cfg: &SimConfig) -> Option<Vec<Placement>> {
    let n = g.len();
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|e| (e.producer.index(), e.consumer.index()))
        .collect();
    let flagged: Vec<bool> = g.codelets().iter().map(|c| c.pipeline_enabled).collect();
    let duration: Vec<u64> = g
        .codelets()
        .iter()
        .map(|c| ref_duration(c.base_cost, &c.resource_class, cfg.chiplets))
        .collect();
    let cu_class: Vec<ResourceClass> = m.cus().iter().map(|c| c.class.clone()).collect();

    let mut enabled_at: Vec<Option<u64>> = vec![None; n];
    let mut started: Vec<Option<(u32, u64)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut busy_until: Vec<Option<(usize, u64)>> = vec![None; cu_class.len()];
    let mut out: Vec<Placement> = Vec::new();
    let horizon: u64 = duration.iter().sum::<u64>() + n as u64 + 2;

    let mut t = 0u64;
    while t <= horizon {
        loop {
            let mut changed = false;
            for slot in busy_until.iter_mut() {
                if let Some((c, end)) = *slot {
                    if end == t {
                        *slot = None;
                        done[c] = true;
                        let (cu_id, start) = started[c].unwrap();
                        out.push((c as u32, cu_id, start, end));
                        changed = true;
                    }
                }
            }
            loop {
                let mut grew = false;
                for c in 0..n {
                    if enabled_at[c].is_some() {
                        continue;
                    }
                    let ok = edges
                        .iter()
                        .filter(|e| e.1 == c)
                        .all(|&(p, _)| done[p] || (cfg.pipelining && flagged[p] && enabled_at[p].is_some()));
                    if ok {
                        enabled_at[c] = Some(t);
                        grew = true;
                    }
                }
                if !grew {
                    break;
                }
            }
            let mut waiting: Vec<usize> = (0..n)
                .filter(|&c| enabled_at[c].is_some() && started[c].is_none())
                .collect();
            waiting.sort_by_key(|&c| (enabled_at[c].unwrap(), c));
            for c in waiting {
                let class = &g.codelets()[c].resource_class;
                let cu =
                    (0..cu_class.len()).find(|&u| busy_until[u].is_none() && (!cfg.chiplets || &cu_class[u] == class));
                if let Some(u) = cu {
                    busy_until[u] = Some((c, t + duration[c]));
                    started[c] = Some((u as u32, t));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if done.iter().all(|&d| d) {
            out.sort_by_key(|p| (p.2, p.0));
            return Some(out);
        }
        t += 1;
    }
    None
}

/// Placements of an engine result in reference form.
pub fn placements(r: &SimResult) -> Vec<Placement> {
    let mut v: Vec<Placement> = r
        .records
        .iter()
        .map(|x| (x.codelet.0, x.cu.0, x.start, x.end))
        .collect();
    v.sort_by_key(|p| (p.2, p.0));
    v
}

/// Checks the trace invariants of a completed run; returns the first failure.
pub fn check_invariants(g: &CodeletGraph, m: &Machine, cfg: &SimConfig, r: &SimResult) -> Result<(), String> {
    // exactly once
    let mut seen = vec![0u32; g.len()];
    for rec in &r.records {
        seen[rec.codelet.index()] += 1;
    }
    if let Some(i) = seen.iter().position(|&s| s != 1) {
        return Err(format!("codelet {i} fired {} times", seen[i]));
    }
    // CU interval disjointness (zero-length intervals occupy no time)
    for cu in m.cus() {
        let mut spans: Vec<(u64, u64)> = r
            .records
            .iter()
            .filter(|x| x.cu == cu.id && x.end > x.start)
            .map(|x| (x.start, x.end))
            .collect();
        spans.sort();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(format!("{} runs overlapping {:?} and {:?}", cu.id, w[0], w[1]));
            }
        }
    }
    // compatible placement
    if cfg.chiplets {
        for rec in &r.records {
            if m.cu(rec.cu).class != g.codelet(rec.codelet).resource_class {
                return Err(format!("{} placed on an incompatible unit", rec.codelet));
            }
        }
    }
    // dependency-correct start times
    let rec_of = |id: CodeletId| r.record(id).expect("every codelet has a record");
    for (i, e) in g.edges().iter().enumerate() {
        let p = rec_of(e.producer);
        let c = rec_of(e.consumer);
        let early = cfg.pipelining && g.codelet(e.producer).pipeline_enabled;
        if r.pipelined_edges[i] != early {
            return Err(format!(
                "edge {i} pipelined flag {} but expected {early}",
                r.pipelined_edges[i]
            ));
        }
        let bound = if early { r.enabled_at[e.producer.index()] } else { p.end };
        if c.start < bound {
            return Err(format!(
                "{} starts at {} before its dependency allows ({bound})",
                e.consumer, c.start
            ));
        }
    }
    // work conservation: while a codelet waits, every compatible unit in
    // its cluster is busy with positive-length work at each event instant
    for c in g.codelets() {
        let me = rec_of(c.id);
        let enabled = r.enabled_at[c.id.index()];
        if me.start == enabled {
            continue;
        }
        let mut instants: Vec<u64> = r
            .records
            .iter()
            .map(|x| x.end)
            .filter(|&t| t > enabled && t < me.start)
            .collect();
        instants.push(enabled);
        for cu in m.cus() {
            if cfg.chiplets && cu.class != c.resource_class {
                continue;
            }
            for &t in &instants {
                let busy = r.records.iter().any(|x| x.cu == cu.id && x.start <= t && t < x.end);
                if !busy {
                    return Err(format!("{} waits at t={t} while {} is idle", c.id, cu.id));
                }
            }
        }
    }
    // makespan and busy accounting
    if r.makespan != r.records.iter().map(|x| x.end).max().unwrap_or(0) {
        return Err("makespan is not the latest end".into());
    }
    let busy: u64 = r.busy.iter().sum();
    let spans: u64 = r.records.iter().map(|x| x.end - x.start).sum();
    if busy != spans {
        return Err(format!("busy {busy} != spans {spans}"));
    }
    Ok(())
}
