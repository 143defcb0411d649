//! Method × tiles × configuration sweeps.
//!
//! Chiplet configurations replace compute units rather than adding them: the
//! total stays fixed and is split with [`split_cus`](crate::machine::split_cus).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::delay::{DelayProfile, Method};
use crate::engine::{run, SimConfig, SimError};
use crate::gemm::{generate, GemmError, GemmParams};
use crate::graph::CodeletGraph;
use crate::machine::{build_machine, Machine, MachineError, MachineSpec, OddSplit};
use crate::metrics::{Configuration, ResultTable};
use crate::trace::SimResult;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    #[error("experiment has no {0}")]
    Empty(&'static str),
    #[error("no delay profile for the {0} method")]
    MissingProfile(Method),
    #[error("{method} {tiles} tiles {config}: {source}")]
    Cell {
        method: Method,
        tiles: u32,
        config: Configuration,
        source: Box<ExperimentError>,
    },
    #[error(transparent)]
    Gemm(#[from] GemmError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ExperimentError {
    /// The innermost error, without cell context.
    pub fn root(&self) -> &ExperimentError {
        match self {
            ExperimentError::Cell { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Machine for a configuration with `cus` compute units in total.
pub fn machine_for(config: Configuration, cus: u32) -> Result<Machine, MachineError> {
    let spec = if config.chiplets() {
        MachineSpec::chiplet_split(cus, OddSplit::default())?
    } else {
        MachineSpec::conventional(cus)
    };
    build_machine(&spec)
}

/// Graph, machine and engine settings for one cell.
pub fn cell_inputs(
    method: Method,
    tiles: u32,
    config: Configuration,
    cus: u32,
    profile: &DelayProfile,
) -> Result<(CodeletGraph, Machine, SimConfig), ExperimentError> {
    let params = GemmParams::new(method, tiles, profile.clone())
        .pipeline(config.pipelining())
        .chiplets(config.chiplets());
    let graph = generate(&params)?;
    let machine = machine_for(config, cus)?;
    let sim = SimConfig::new(config.pipelining(), config.chiplets()).with_multipliers(profile.multipliers.clone());
    Ok((graph, machine, sim))
}

pub fn run_cell(
    method: Method,
    tiles: u32,
    config: Configuration,
    cus: u32,
    profile: &DelayProfile,
) -> Result<SimResult, ExperimentError> {
    let (graph, machine, sim) = cell_inputs(method, tiles, config, cus, profile)?;
    Ok(run(&graph, &machine, &sim)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Experiment {
    pub methods: Vec<Method>,
    pub tiles: Vec<u32>,
    pub configs: Vec<Configuration>,
    pub cus: u32,
}

impl Experiment {
    /// Both methods, tiles 8 through 64, all four configurations, 64 CUs.
    pub fn default_sweep() -> Self {
        Experiment {
            methods: Method::ALL.to_vec(),
            tiles: vec![8, 16, 32, 64],
            configs: Configuration::ALL.to_vec(),
            cus: 64,
        }
    }

    /// Cells in output order: method, then tiles, then configuration.
    pub fn cells(&self) -> Vec<(Method, u32, Configuration)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            for &t in &self.tiles {
                for &c in &self.configs {
                    out.push((m, t, c));
                }
            }
        }
        out
    }

    fn check(&self) -> Result<(), ExperimentError> {
        if self.methods.is_empty() {
            return Err(ExperimentError::Empty("methods"));
        }
        if self.tiles.is_empty() {
            return Err(ExperimentError::Empty("tile counts"));
        }
        if self.configs.is_empty() {
            return Err(ExperimentError::Empty("configurations"));
        }
        Ok(())
    }
}

/// Makespan of every cell, one table per method. Runs cells concurrently
/// with the `parallel` feature; the result does not depend on it.
pub fn sweep(
    exp: &Experiment,
    profiles: &BTreeMap<Method, DelayProfile>,
) -> Result<BTreeMap<Method, ResultTable>, ExperimentError> {
    exp.check()?;
    for m in &exp.methods {
        if !profiles.contains_key(m) {
            return Err(ExperimentError::MissingProfile(*m));
        }
    }
    let cell = |&(method, tiles, config): &(Method, u32, Configuration)| {
        run_cell(method, tiles, config, exp.cus, &profiles[&method])
            .map(|r| r.makespan)
            .map_err(|e| ExperimentError::Cell {
                method,
                tiles,
                config,
                source: Box::new(e),
            })
    };
    let cells = exp.cells();
    #[cfg(feature = "parallel")]
    let makespans: Vec<_> = {
        use rayon::prelude::*;
        cells.par_iter().map(cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let makespans: Vec<_> = cells.iter().map(cell).collect();

    let mut tables: BTreeMap<Method, ResultTable> = BTreeMap::new();
    for (&(method, tiles, config), makespan) in cells.iter().zip(makespans) {
        tables.entry(method).or_default().insert(tiles, config, makespan?);
    }
    Ok(tables)
}

/// The built-in calibrated profile for every method.
pub fn calibrated_profiles() -> BTreeMap<Method, DelayProfile> {
    Method::ALL
        .into_iter()
        .map(|m| (m, DelayProfile::paper_calibrated(m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ResourceClass;

    #[test]
    fn chiplet_machines_keep_the_total() {
        let m = machine_for(Configuration::Both, 64).unwrap();
        assert_eq!(m.total_cus(), 64);
        let counts = m.class_counts();
        assert_eq!(counts[&ResourceClass::Conventional], 1);
        assert_eq!(counts[&ResourceClass::tpu_like()], 32);
        assert_eq!(counts[&ResourceClass::udp_like()], 31);
        assert_eq!(
            machine_for(Configuration::Pipelined, 64).unwrap().class_counts().len(),
            1
        );
    }

    #[test]
    fn basic_cells_match_published() {
        let p = DelayProfile::paper_calibrated(Method::Outer);
        assert_eq!(
            run_cell(Method::Outer, 8, Configuration::Basic, 64, &p)
                .unwrap()
                .makespan,
            1208
        );
        assert_eq!(
            run_cell(Method::Outer, 8, Configuration::Pipelined, 64, &p)
                .unwrap()
                .makespan,
            324
        );
    }

    #[test]
    fn sweep_orders_and_rejects() {
        let exp = Experiment {
            methods: vec![Method::Outer],
            tiles: vec![8],
            configs: vec![Configuration::Basic, Configuration::Both],
            cus: 64,
        };
        let t = sweep(&exp, &calibrated_profiles()).unwrap();
        assert_eq!(t[&Method::Outer].get(8, Configuration::Basic), Some(1208));
        assert!(t[&Method::Outer].get(8, Configuration::Pipelined).is_none());

        let empty = Experiment {
            tiles: vec![],
            ..exp.clone()
        };
        assert_eq!(
            sweep(&empty, &calibrated_profiles()),
            Err(ExperimentError::Empty("tile counts"))
        );
        assert_eq!(
            sweep(&exp, &BTreeMap::new()),
            Err(ExperimentError::MissingProfile(Method::Outer))
        );

        let bad = Experiment { tiles: vec![6], ..exp };
        let err = sweep(&bad, &calibrated_profiles()).unwrap_err();
        assert_eq!(err.root(), &ExperimentError::Gemm(GemmError::BadTiles(6)));
    }
}
