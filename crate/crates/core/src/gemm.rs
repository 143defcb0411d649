//! Tiled GEMM codelet graph generators.
//!
//! Both generators assign ids in a canonical order: `start` is 0, then each
//! stage in ascending tile order, `end` last. Every codelet lands in a single
//! threaded procedure on cluster 0.

use thiserror::Error;

use crate::delay::{DelayError, DelayProfile};
use crate::graph::{ClusterId, CodeletGraph, CodeletId, GraphBuilder, ResourceClass, TpId};

pub use crate::delay::Method;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GemmError {
    #[error("tile count must be a power of two >= 2, got {0}")]
    BadTiles(u32),
    #[error("profile is for the {profile} family but the {method} method was requested")]
    ProfileMismatch { method: Method, profile: Method },
    #[error(transparent)]
    Delay(#[from] DelayError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GemmParams {
    pub method: Method,
    pub tiles: u32,
    pub pipeline: bool,
    pub chiplets: bool,
    pub profile: DelayProfile,
}

impl GemmParams {
    pub fn new(method: Method, tiles: u32, profile: DelayProfile) -> Self {
        GemmParams {
            method,
            tiles,
            pipeline: false,
            chiplets: false,
            profile,
        }
    }

    pub fn pipeline(mut self, on: bool) -> Self {
        self.pipeline = on;
        self
    }

    pub fn chiplets(mut self, on: bool) -> Self {
        self.chiplets = on;
        self
    }

    fn check(&self, method: Method) -> Result<(), GemmError> {
        if self.tiles < 2 || !self.tiles.is_power_of_two() {
            return Err(GemmError::BadTiles(self.tiles));
        }
        if self.profile.family != method {
            return Err(GemmError::ProfileMismatch {
                method,
                profile: self.profile.family,
            });
        }
        Ok(())
    }
}

pub fn generate(params: &GemmParams) -> Result<CodeletGraph, GemmError> {
    match params.method {
        Method::Outer => gen_outer(params),
        Method::Inner => gen_inner(params),
    }
}

struct Stage<'a> {
    params: &'a GemmParams,
    builder: GraphBuilder,
}

impl Stage<'_> {
    fn add(
        &mut self,
        label: String,
        kind: &str,
        class: ResourceClass,
        pipelined: bool,
    ) -> Result<CodeletId, GemmError> {
        let cost = self.params.profile.cost(kind, self.params.tiles)?;
        let id = self.builder.codelet(label, kind, cost);
        let c = self.builder.get_mut(id);
        if self.params.chiplets {
            c.resource_class = class;
        }
        c.pipeline_enabled = pipelined && self.params.pipeline;
        Ok(id)
    }
}

fn builder(params: &GemmParams) -> Stage<'_> {
    let name = format!("{}-product-{}", params.method, params.tiles);
    Stage {
        params,
        builder: GraphBuilder::new(name)
            .tiles(params.tiles)
            .tps(vec![(TpId(0), ClusterId(0))]),
    }
}

/// start → T conv → T vmul → binary sum tree (T−1 sums, log₂T levels) → end.
pub fn gen_outer(params: &GemmParams) -> Result<CodeletGraph, GemmError> {
    params.check(Method::Outer)?;
    let t = params.tiles;
    let mut s = builder(params);

    let start = s.add("start".into(), "start", ResourceClass::Conventional, false)?;
    let convs = (0..t)
        .map(|i| s.add(format!("conv{i}"), "conv", ResourceClass::udp_like(), true))
        .collect::<Result<Vec<_>, _>>()?;
    let vmuls = (0..t)
        .map(|i| s.add(format!("vmul{i}"), "vmul", ResourceClass::tpu_like(), true))
        .collect::<Result<Vec<_>, _>>()?;

    let mut edges = Vec::new();
    for (&c, &v) in convs.iter().zip(&vmuls) {
        edges.push((start, c));
        edges.push((c, v));
    }

    let mut level = vmuls;
    let mut depth = 1;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len() / 2);
        for (i, pair) in level.chunks(2).enumerate() {
            let sum = s.add(format!("sum{depth}.{i}"), "sum", ResourceClass::tpu_like(), true)?;
            edges.push((pair[0], sum));
            edges.push((pair[1], sum));
            next.push(sum);
        }
        level = next;
        depth += 1;
    }

    let end = s.add("end".into(), "end", ResourceClass::Conventional, false)?;
    edges.push((level[0], end));

    let mut b = s.builder;
    for (p, c) in edges {
        b.edge(p, c);
    }
    Ok(b.build())
}

/// start → T independent conv→dot chains → end.
pub fn gen_inner(params: &GemmParams) -> Result<CodeletGraph, GemmError> {
    params.check(Method::Inner)?;
    let t = params.tiles;
    let mut s = builder(params);

    let start = s.add("start".into(), "start", ResourceClass::Conventional, false)?;
    let convs = (0..t)
        .map(|i| s.add(format!("conv{i}"), "conv", ResourceClass::udp_like(), true))
        .collect::<Result<Vec<_>, _>>()?;
    let dots = (0..t)
        .map(|i| s.add(format!("dot{i}"), "dot", ResourceClass::tpu_like(), true))
        .collect::<Result<Vec<_>, _>>()?;
    let end = s.add("end".into(), "end", ResourceClass::Conventional, false)?;

    let mut b = s.builder;
    for (&c, &d) in convs.iter().zip(&dots) {
        b.edge(start, c);
        b.edge(c, d);
        b.edge(d, end);
    }
    Ok(b.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{topo_order, validate_graph};

    fn outer(t: u32) -> GemmParams {
        GemmParams::new(Method::Outer, t, DelayProfile::paper_calibrated(Method::Outer))
    }

    fn inner(t: u32) -> GemmParams {
        GemmParams::new(Method::Inner, t, DelayProfile::paper_calibrated(Method::Inner))
    }

    fn count_kind(g: &CodeletGraph, kind: &str) -> usize {
        g.codelets().iter().filter(|c| c.kind == kind).count()
    }

    #[test]
    fn outer_four_tiles() {
        let g = gen_outer(&outer(4)).unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g.edges().len(), 15);
        assert_eq!(count_kind(&g, "conv"), 4);
        assert_eq!(count_kind(&g, "vmul"), 4);
        assert_eq!(count_kind(&g, "sum"), 3);
        assert!(validate_graph(&g).is_ok());
    }

    #[test]
    fn outer_two_tiles() {
        let g = gen_outer(&outer(2)).unwrap();
        assert_eq!((g.len(), g.edges().len()), (7, 7));
    }

    /// Depth of each sum codelet counted from the vmul layer.
    fn sum_levels(g: &CodeletGraph) -> Vec<usize> {
        let mut depth = vec![0usize; g.len()];
        let mut widths = Vec::new();
        for id in topo_order(g).unwrap() {
            let c = g.codelet(id);
            if c.kind == "sum" {
                let d = g
                    .in_edges(id)
                    .iter()
                    .map(|&e| depth[g.edge(e).producer.index()])
                    .max()
                    .unwrap()
                    + 1;
                depth[id.index()] = d;
                if widths.len() < d {
                    widths.resize(d, 0);
                }
                widths[d - 1] += 1;
            }
        }
        widths
    }

    #[test]
    fn outer_eight_tiles_has_seven_sums_in_three_levels() {
        let g = gen_outer(&outer(8)).unwrap();
        assert_eq!(count_kind(&g, "sum"), 7);
        assert_eq!(sum_levels(&g), vec![4, 2, 1]);
    }

    #[test]
    fn outer_canonical_ids() {
        let g = gen_outer(&outer(4)).unwrap();
        let kinds: Vec<_> = g.codelets().iter().map(|c| c.kind.as_str()).collect();
        assert_eq!(
            kinds,
            ["start", "conv", "conv", "conv", "conv", "vmul", "vmul", "vmul", "vmul", "sum", "sum", "sum", "end"]
        );
        let labels: Vec<_> = g.codelets()[9..12].iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["sum1.0", "sum1.1", "sum2.0"]);
    }

    #[test]
    fn outer_flags_and_classes() {
        let g = gen_outer(&outer(8).pipeline(true).chiplets(true)).unwrap();
        for c in g.codelets() {
            let (class, piped) = match c.kind.as_str() {
                "start" | "end" => (ResourceClass::Conventional, false),
                "conv" => (ResourceClass::udp_like(), true),
                _ => (ResourceClass::tpu_like(), true),
            };
            assert_eq!(c.resource_class, class, "{}", c.label);
            assert_eq!(c.pipeline_enabled, piped, "{}", c.label);
        }
        let plain = gen_outer(&outer(8)).unwrap();
        assert!(plain
            .codelets()
            .iter()
            .all(|c| c.resource_class == ResourceClass::Conventional && !c.pipeline_enabled));
    }

    #[test]
    fn outer_costs_from_profile() {
        let g = gen_outer(&outer(8)).unwrap();
        let cost = |kind: &str| g.codelets().iter().find(|c| c.kind == kind).unwrap().base_cost;
        assert_eq!(
            (cost("start"), cost("conv"), cost("vmul"), cost("sum"), cost("end")),
            (3, 120, 120, 321, 2)
        );
    }

    #[test]
    fn inner_eight_tiles() {
        let g = gen_inner(&inner(8)).unwrap();
        assert_eq!((g.len(), g.edges().len()), (18, 24));
        assert!(validate_graph(&g).is_ok());
        let conv = g.codelets().iter().find(|c| c.kind == "conv").unwrap().base_cost;
        let dot = g.codelets().iter().find(|c| c.kind == "dot").unwrap().base_cost;
        assert_eq!(conv + dot, 201);
    }

    #[test]
    fn inner_flags_and_classes() {
        let g = gen_inner(&inner(4).pipeline(true).chiplets(true)).unwrap();
        for c in g.codelets() {
            match c.kind.as_str() {
                "conv" => assert_eq!(c.resource_class, ResourceClass::udp_like()),
                "dot" => assert_eq!(c.resource_class, ResourceClass::tpu_like()),
                _ => assert_eq!(c.resource_class, ResourceClass::Conventional),
            }
            assert_eq!(c.pipeline_enabled, c.kind == "conv" || c.kind == "dot");
        }
    }

    #[test]
    fn bad_tiles_and_profile_mismatch() {
        assert_eq!(gen_inner(&inner(3)), Err(GemmError::BadTiles(3)));
        assert_eq!(gen_outer(&outer(1)), Err(GemmError::BadTiles(1)));
        assert_eq!(gen_outer(&outer(0)), Err(GemmError::BadTiles(0)));
        let mut p = outer(4);
        p.profile = DelayProfile::paper_calibrated(Method::Inner);
        assert!(matches!(gen_outer(&p), Err(GemmError::ProfileMismatch { .. })));
        assert!(matches!(
            generate(&inner(2)),
            Err(GemmError::Delay(DelayError::NegativeCost(_)))
        ));
    }

    #[test]
    fn deterministic_output() {
        for t in [2, 4, 8, 16, 32, 64] {
            assert_eq!(gen_outer(&outer(t)).unwrap(), gen_outer(&outer(t)).unwrap());
        }
    }

    proptest::proptest! {
        #[test]
        fn generated_graphs_validate(log in 1u32..8, pipe in proptest::bool::ANY, chip in proptest::bool::ANY) {
            let t = 1 << log;
            let g = gen_outer(&outer(t).pipeline(pipe).chiplets(chip)).unwrap();
            proptest::prop_assert!(validate_graph(&g).is_ok());
            proptest::prop_assert_eq!(g.len() as u32, 3 * t + 1);
            proptest::prop_assert_eq!(g.edges().len() as u32, 4 * t - 1);
            let widths = sum_levels(&g);
            proptest::prop_assert_eq!(widths.len() as u32, log);
            for (k, w) in widths.iter().enumerate() {
                proptest::prop_assert_eq!(*w as u32, t >> (k + 1));
            }
            if t >= 4 {
                let g = gen_inner(&inner(t).pipeline(pipe).chiplets(chip)).unwrap();
                proptest::prop_assert!(validate_graph(&g).is_ok());
                proptest::prop_assert_eq!(g.len() as u32, 2 * t + 2);
                proptest::prop_assert_eq!(g.edges().len() as u32, 3 * t);
            }
        }
    }
}
