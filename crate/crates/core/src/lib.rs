//! Discrete-event simulation of Codelet graphs on conventional and
//! chiplet-equipped machines.
//!
//! A [`CodeletGraph`] of codelets joined by dependency edges runs on a
//! [`Machine`] of compute units grouped into clusters. The engine fires
//! codelets as their synchronization slots reach zero, optionally lets
//! pipeline-enabled codelets signal consumers as soon as they are enabled,
//! and, with chiplets on, places codelets only on units of their resource
//! class with the class speedup applied.
//!
//! ```
//! use camsim_core::{generate, run, build_machine, DelayProfile, GemmParams, MachineSpec, Method, SimConfig};
//!
//! let profile = DelayProfile::paper_calibrated(Method::Outer);
//! let graph = generate(&GemmParams::new(Method::Outer, 8, profile)).unwrap();
//! let machine = build_machine(&MachineSpec::conventional(64)).unwrap();
//! let result = run(&graph, &machine, &SimConfig::default()).unwrap();
//! assert_eq!(result.makespan, 1208);
//! ```

pub mod calibrate;
pub mod delay;
pub mod engine;
pub mod experiment;
pub mod gantt;
pub mod gemm;
pub mod graph;
pub mod machine;
pub mod metrics;
pub mod reference;
pub mod trace;

pub use calibrate::{calibrate, CalibrationError, CalibrationResult, SearchBounds};
pub use delay::{effective_duration, eval_cost, CostPoly, DelayError, DelayProfile, Method, Multipliers};
pub use engine::{run, DeadlockReport, SimConfig, SimError, Simulation};
pub use experiment::{run_cell, sweep, Experiment, ExperimentError};
pub use gantt::export_gantt;
pub use gemm::{generate, GemmError, GemmParams};
pub use graph::{
    topo_order, validate_graph, Codelet, CodeletGraph, CodeletId, CodeletState, GraphBuilder, GraphError,
    ResourceClass, RunState,
};
pub use machine::{build_machine, split_cus, Machine, MachineError, MachineSpec};
pub use metrics::{makespan, speedup_table, utilization, Configuration, MetricsError, ResultTable};
pub use trace::{SimResult, Time, TraceRecord};
