//! Published GEMM makespans and speedup factors at 64 compute units, used as
//! calibration targets and for residual reports.

use crate::delay::Method;
use crate::metrics::{Configuration, ResultTable};

/// Compute units the published tables were measured with.
pub const PUBLISHED_CUS: u32 = 64;

/// Tile counts in the published tables.
pub const PUBLISHED_TILES: [u32; 4] = [8, 16, 32, 64];

const OUTER: [(u32, [u64; 4]); 4] = [
    (8, [1208, 324, 94, 26]),
    (16, [5609, 1284, 405, 93]),
    (32, [26570, 5605, 1930, 411]),
    (64, [124811, 22406, 9005, 3376]),
];

const INNER: [(u32, [u64; 4]); 4] = [
    (8, [204, 133, 33, 22]),
    (16, [1607, 984, 235, 141]),
    (32, [12819, 7732, 1827, 1094]),
    (64, [102467, 61572, 14467, 8717]),
];

const OUTER_SPEEDUPS: [(u32, [&str; 3]); 4] = [
    (8, ["3.72", "12.8", "46.4"]),
    (16, ["4.36", "13.8", "60.3"]),
    (32, ["4.74", "13.7", "64.6"]),
    (64, ["5.57", "13.9", "37.0"]),
];

const INNER_SPEEDUPS: [(u32, [&str; 3]); 4] = [
    (8, ["1.53", "6.18", "9.27"]),
    (16, ["1.63", "6.84", "11.4"]),
    (32, ["1.66", "7.02", "11.7"]),
    (64, ["1.67", "7.08", "11.8"]),
];

/// Published makespans (basic, pipelined, chiplets, both) per tile count.
pub fn published_table(method: Method) -> ResultTable {
    match method {
        Method::Outer => ResultTable::from_rows(&OUTER),
        Method::Inner => ResultTable::from_rows(&INNER),
    }
}

/// Published speedup factor string for a non-basic configuration.
pub fn published_speedup(method: Method, tiles: u32, config: Configuration) -> Option<&'static str> {
    let rows = match method {
        Method::Outer => &OUTER_SPEEDUPS,
        Method::Inner => &INNER_SPEEDUPS,
    };
    let col = match config {
        Configuration::Basic => return None,
        Configuration::Pipelined => 0,
        Configuration::Chiplets => 1,
        Configuration::Both => 2,
    };
    rows.iter().find(|(t, _)| *t == tiles).map(|(_, cells)| cells[col])
}
