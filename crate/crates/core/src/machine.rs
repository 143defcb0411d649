//! Codelet abstract machine instances: clusters of compute units, each
//! unit tagged with a resource class.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClusterId, ResourceClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CuId(pub u32);

impl CuId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cu{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeUnit {
    pub id: CuId,
    pub cluster: ClusterId,
    pub class: ResourceClass,
}

/// A scheduling context plus its compute units. The scheduling unit itself
/// is implicit and never occupies a compute unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: ClusterId,
    pub cus: Vec<CuId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    clusters: Vec<Cluster>,
    cus: Vec<ComputeUnit>,
    pub chiplets_enabled: bool,
}

impl Machine {
    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn cus(&self) -> &[ComputeUnit] {
        &self.cus
    }

    pub fn cu(&self, id: CuId) -> &ComputeUnit {
        &self.cus[id.index()]
    }

    pub fn total_cus(&self) -> usize {
        self.cus.len()
    }

    pub fn class_counts(&self) -> BTreeMap<ResourceClass, u32> {
        let mut counts = BTreeMap::new();
        for cu in &self.cus {
            *counts.entry(cu.class.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn has_class_in(&self, cluster: ClusterId, class: &ResourceClass) -> bool {
        self.cluster(cluster)
            .is_some_and(|c| c.cus.iter().any(|&cu| &self.cu(cu).class == class))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("machine needs at least one cluster with at least one compute unit ({0})")]
    EmptyCluster(String),
    #[error("class counts sum to {actual}, expected {expected}")]
    CountMismatch { expected: u32, actual: u32 },
    #[error("a chiplet machine needs at least 3 compute units, got {0}")]
    TooFewCUs(u32),
    #[error("cluster {0} declared more than once")]
    DuplicateCluster(u32),
    #[error("malformed machine file: {0}")]
    Parse(String),
}

/// Machine description, also the JSON machine file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSpec {
    pub clusters: Vec<ClusterSpec>,
    pub chiplets_enabled: bool,
    /// Optional declared total; checked against the class counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_cus: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub id: u32,
    pub cus: Vec<CuGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuGroup {
    pub class: ResourceClass,
    pub count: u32,
}

/// Which chiplet class receives the extra unit when the chiplet share is odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OddSplit {
    #[default]
    FavorTpu,
    FavorUdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub conventional: u32,
    pub tpu_like: u32,
    pub udp_like: u32,
}

impl SplitCounts {
    pub fn total(&self) -> u32 {
        self.conventional + self.tpu_like + self.udp_like
    }
}

/// One conventional unit (for the start and end codelets); the rest split
/// as evenly as possible between the two chiplet classes.
pub fn split_cus(total: u32) -> Result<SplitCounts, MachineError> {
    split_cus_with(total, OddSplit::default())
}

pub fn split_cus_with(total: u32, odd: OddSplit) -> Result<SplitCounts, MachineError> {
    if total < 3 {
        return Err(MachineError::TooFewCUs(total));
    }
    let rest = total - 1;
    let (big, small) = (rest - rest / 2, rest / 2);
    let (tpu_like, udp_like) = match odd {
        OddSplit::FavorTpu => (big, small),
        OddSplit::FavorUdp => (small, big),
    };
    Ok(SplitCounts {
        conventional: 1,
        tpu_like,
        udp_like,
    })
}

impl MachineSpec {
    /// Single cluster of `total` conventional units.
    pub fn conventional(total: u32) -> Self {
        MachineSpec {
            clusters: vec![ClusterSpec {
                id: 0,
                cus: vec![CuGroup {
                    class: ResourceClass::Conventional,
                    count: total,
                }],
            }],
            chiplets_enabled: false,
            total_cus: Some(total),
        }
    }

    /// Single cluster with `total` units replaced by the chiplet split.
    pub fn chiplet_split(total: u32, odd: OddSplit) -> Result<Self, MachineError> {
        let split = split_cus_with(total, odd)?;
        Ok(Self::from_split(split, Some(total)))
    }

    pub fn from_split(split: SplitCounts, total_cus: Option<u32>) -> Self {
        MachineSpec {
            clusters: vec![ClusterSpec {
                id: 0,
                cus: vec![
                    CuGroup {
                        class: ResourceClass::Conventional,
                        count: split.conventional,
                    },
                    CuGroup {
                        class: ResourceClass::tpu_like(),
                        count: split.tpu_like,
                    },
                    CuGroup {
                        class: ResourceClass::udp_like(),
                        count: split.udp_like,
                    },
                ],
            }],
            chiplets_enabled: true,
            total_cus,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, MachineError> {
        serde_json::from_str(text).map_err(|e| MachineError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("machine spec serializes")
    }
}

/// Builds a machine with dense CU ids ordered by cluster id, then class
/// (conventional first, chiplet classes by name), then index.
pub fn build_machine(spec: &MachineSpec) -> Result<Machine, MachineError> {
    if spec.clusters.is_empty() {
        return Err(MachineError::EmptyCluster("no clusters".into()));
    }
    let mut specs: Vec<&ClusterSpec> = spec.clusters.iter().collect();
    specs.sort_by_key(|c| c.id);
    if let Some(w) = specs.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(MachineError::DuplicateCluster(w[0].id));
    }

    let mut clusters = Vec::with_capacity(specs.len());
    let mut cus = Vec::new();
    for cs in specs {
        let mut per_class: BTreeMap<&ResourceClass, u32> = BTreeMap::new();
        for group in &cs.cus {
            *per_class.entry(&group.class).or_insert(0) += group.count;
        }
        let cluster = ClusterId(cs.id);
        let mut ids = Vec::new();
        for (class, count) in per_class {
            for _ in 0..count {
                let id = CuId(cus.len() as u32);
                cus.push(ComputeUnit {
                    id,
                    cluster,
                    class: class.clone(),
                });
                ids.push(id);
            }
        }
        if ids.is_empty() {
            return Err(MachineError::EmptyCluster(format!(
                "cluster {} has no compute units",
                cs.id
            )));
        }
        clusters.push(Cluster { id: cluster, cus: ids });
    }

    if let Some(expected) = spec.total_cus {
        let actual = cus.len() as u32;
        if expected != actual {
            return Err(MachineError::CountMismatch { expected, actual });
        }
    }

    Ok(Machine {
        clusters,
        cus,
        chiplets_enabled: spec.chiplets_enabled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_four_conventional() {
        let m = build_machine(&MachineSpec::conventional(64)).unwrap();
        assert_eq!(m.total_cus(), 64);
        assert!(m
            .cus()
            .iter()
            .enumerate()
            .all(|(i, cu)| cu.id == CuId(i as u32) && cu.class == ResourceClass::Conventional));
    }

    #[test]
    fn chiplet_machine_orders_classes() {
        let m = build_machine(&MachineSpec::chiplet_split(64, OddSplit::FavorTpu).unwrap()).unwrap();
        assert_eq!(m.total_cus(), 64);
        assert_eq!(m.cu(CuId(0)).class, ResourceClass::Conventional);
        assert_eq!(m.cu(CuId(1)).class, ResourceClass::tpu_like());
        assert_eq!(m.cu(CuId(32)).class, ResourceClass::tpu_like());
        assert_eq!(m.cu(CuId(33)).class, ResourceClass::udp_like());
        let counts = m.class_counts();
        assert_eq!(counts[&ResourceClass::tpu_like()], 32);
        assert_eq!(counts[&ResourceClass::udp_like()], 31);
    }

    #[test]
    fn class_order_ignores_declaration_order() {
        let spec = MachineSpec {
            clusters: vec![ClusterSpec {
                id: 0,
                cus: vec![
                    CuGroup {
                        class: ResourceClass::udp_like(),
                        count: 1,
                    },
                    CuGroup {
                        class: ResourceClass::tpu_like(),
                        count: 1,
                    },
                    CuGroup {
                        class: ResourceClass::Conventional,
                        count: 1,
                    },
                ],
            }],
            chiplets_enabled: true,
            total_cus: None,
        };
        let m = build_machine(&spec).unwrap();
        let classes: Vec<_> = m.cus().iter().map(|c| c.class.clone()).collect();
        assert_eq!(
            classes,
            vec![
                ResourceClass::Conventional,
                ResourceClass::tpu_like(),
                ResourceClass::udp_like()
            ]
        );
    }

    #[test]
    fn multi_cluster_ids_follow_cluster_order() {
        let spec = MachineSpec {
            clusters: vec![
                ClusterSpec {
                    id: 1,
                    cus: vec![CuGroup {
                        class: ResourceClass::Conventional,
                        count: 2,
                    }],
                },
                ClusterSpec {
                    id: 0,
                    cus: vec![CuGroup {
                        class: ResourceClass::Conventional,
                        count: 1,
                    }],
                },
            ],
            chiplets_enabled: false,
            total_cus: None,
        };
        let m = build_machine(&spec).unwrap();
        assert_eq!(m.cu(CuId(0)).cluster, ClusterId(0));
        assert_eq!(m.cluster(ClusterId(1)).unwrap().cus, vec![CuId(1), CuId(2)]);
    }

    #[test]
    fn errors() {
        let empty = MachineSpec {
            clusters: vec![],
            chiplets_enabled: false,
            total_cus: None,
        };
        assert!(matches!(build_machine(&empty), Err(MachineError::EmptyCluster(_))));
        let zero = MachineSpec::conventional(0);
        assert!(matches!(build_machine(&zero), Err(MachineError::EmptyCluster(_))));
        let mut wrong = MachineSpec::conventional(4);
        wrong.total_cus = Some(5);
        assert_eq!(
            build_machine(&wrong),
            Err(MachineError::CountMismatch { expected: 5, actual: 4 })
        );
    }

    #[test]
    fn split_examples() {
        assert_eq!(
            split_cus(64).unwrap(),
            SplitCounts {
                conventional: 1,
                tpu_like: 32,
                udp_like: 31
            }
        );
        assert_eq!(
            split_cus(65).unwrap(),
            SplitCounts {
                conventional: 1,
                tpu_like: 32,
                udp_like: 32
            }
        );
        assert_eq!(
            split_cus_with(64, OddSplit::FavorUdp).unwrap(),
            SplitCounts {
                conventional: 1,
                tpu_like: 31,
                udp_like: 32
            }
        );
        assert_eq!(split_cus(2), Err(MachineError::TooFewCUs(2)));
    }

    #[test]
    fn machine_file_roundtrip() {
        let text = r#"{"clusters":[{"id":0,"cus":[{"class":"conventional","count":1},{"class":"tpu-like","count":2}]}],"chiplets_enabled":true}"#;
        let spec = MachineSpec::from_json(text).unwrap();
        assert_eq!(build_machine(&spec).unwrap().total_cus(), 3);
        assert_eq!(MachineSpec::from_json(&spec.to_json()).unwrap(), spec);
        assert!(MachineSpec::from_json(r#"{"clusters":[],"chiplets_enabled":true,"x":1}"#).is_err());
    }

    proptest::proptest! {
        #[test]
        fn split_sums_to_total(total in 3u32..10_000) {
            let s = split_cus(total).unwrap();
            proptest::prop_assert_eq!(s.total(), total);
            proptest::prop_assert_eq!(s.conventional, 1);
            proptest::prop_assert!(s.tpu_like >= s.udp_like && s.tpu_like - s.udp_like <= 1);
        }
    }
}
