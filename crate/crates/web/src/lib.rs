//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export has a plain Rust counterpart returning `Result<String, String>`
//! so it can be tested natively.

use camsim_core::experiment::{calibrated_profiles, machine_for, run_cell, sweep, Experiment};
use camsim_core::gantt::export_gantt;
use camsim_core::metrics::{speedup_table, utilization, Configuration};
use camsim_core::{DelayProfile, Method};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest machine the makespan curve will sweep up to.
pub const MAX_CURVE_CUS: u32 = 256;

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

/// Gantt chart SVG of one GEMM run.
pub fn gantt(method: &str, tiles: u32, config: &str, cus: u32) -> Result<String, String> {
    let method: Method = parse(method)?;
    let config: Configuration = parse(config)?;
    let profile = DelayProfile::paper_calibrated(method);
    let result = run_cell(method, tiles, config, cus, &profile).map_err(|e| e.to_string())?;
    let machine = machine_for(config, cus).map_err(|e| e.to_string())?;
    export_gantt(&result.records, &machine).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    method: Method,
    tiles: u32,
    makespans: Vec<u64>,
    speedups: Vec<String>,
}

/// Makespans and speedup factors for both methods and all configurations,
/// as JSON rows `{method, tiles, makespans[4], speedups[3]}`.
pub fn sweep_rows(tiles: &str, cus: u32) -> Result<String, String> {
    let tiles = tiles
        .split(',')
        .map(|t| parse::<u32>(t.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let exp = Experiment {
        tiles,
        cus,
        ..Experiment::default_sweep()
    };
    let tables = sweep(&exp, &calibrated_profiles()).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for (&method, table) in &tables {
        let speedups = speedup_table(table).map_err(|e| e.to_string())?;
        for t in table.tiles() {
            rows.push(SweepRow {
                method,
                tiles: t,
                makespans: Configuration::ALL
                    .iter()
                    .map(|&c| table.get(t, c).unwrap_or(0))
                    .collect(),
                speedups: Configuration::ALL[1..]
                    .iter()
                    .map(|&c| speedups.get(t, c).map(|s| s.formatted()).unwrap_or_default())
                    .collect(),
            });
        }
    }
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize, PartialEq)]
struct CurvePoint {
    cus: u32,
    makespan: u64,
    utilization: f64,
}

/// Makespan and utilization for every machine size up to `max_cus`, as JSON
/// points `{cus, makespan, utilization}`. Chiplet configurations start at 3
/// units, the smallest split with one unit per class.
pub fn cu_curve(method: &str, tiles: u32, config: &str, max_cus: u32) -> Result<String, String> {
    let method: Method = parse(method)?;
    let config: Configuration = parse(config)?;
    if max_cus > MAX_CURVE_CUS {
        return Err(format!("at most {MAX_CURVE_CUS} compute units"));
    }
    let profile = DelayProfile::paper_calibrated(method);
    let first = if config.chiplets() { 3 } else { 1 };
    let mut points = Vec::new();
    for cus in first..=max_cus {
        let r = run_cell(method, tiles, config, cus, &profile).map_err(|e| e.to_string())?;
        let machine = machine_for(config, cus).map_err(|e| e.to_string())?;
        let u = utilization(&r, &machine).map(|u| u.aggregate).unwrap_or(0.0);
        points.push(CurvePoint {
            cus,
            makespan: r.makespan,
            utilization: (u * 1000.0).round() / 1000.0,
        });
    }
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = ganttSvg)]
pub fn gantt_svg(method: &str, tiles: u32, config: &str, cus: u32) -> Result<String, JsValue> {
    gantt(method, tiles, config, cus).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = sweepTable)]
pub fn sweep_table(tiles: &str, cus: u32) -> Result<String, JsValue> {
    sweep_rows(tiles, cus).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = cuCurve)]
pub fn cu_curve_js(method: &str, tiles: u32, config: &str, max_cus: u32) -> Result<String, JsValue> {
    cu_curve(method, tiles, config, max_cus).map_err(|e| JsValue::from_str(&e))
}
