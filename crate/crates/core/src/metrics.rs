//! Makespan, utilization, result tables and speedup factors.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::Method;
use crate::machine::Machine;
use crate::trace::{SimResult, Time, TraceRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("makespan is zero")]
    ZeroMakespan,
    #[error("row for {tiles} tiles has no positive basic makespan")]
    MissingBasic { tiles: u32 },
    #[error("table is missing {config} for {tiles} tiles")]
    Incomplete { tiles: u32, config: Configuration },
    #[error("csv: {0}")]
    Csv(String),
}

pub fn makespan(trace: &[TraceRecord]) -> Result<Time, MetricsError> {
    trace.iter().map(|r| r.end).max().ok_or(MetricsError::EmptyTrace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utilization {
    /// Busy fraction of each compute unit, indexed by CU id.
    pub per_cu: Vec<f64>,
    pub aggregate: f64,
}

/// Busy time over elapsed run time, per CU and over the whole machine.
pub fn utilization(result: &SimResult, machine: &Machine) -> Result<Utilization, MetricsError> {
    if result.records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let span = result.makespan - result.origin;
    if span == 0 {
        return Err(MetricsError::ZeroMakespan);
    }
    let mut busy = vec![0u64; machine.total_cus()];
    for r in &result.records {
        busy[r.cu.index()] += r.duration();
    }
    let per_cu = busy.iter().map(|&b| b as f64 / span as f64).collect();
    let total: u64 = busy.iter().sum();
    Ok(Utilization {
        per_cu,
        aggregate: total as f64 / (machine.total_cus() as f64 * span as f64),
    })
}

/// The four experiment configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Configuration {
    Basic,
    Pipelined,
    Chiplets,
    Both,
}

impl Configuration {
    pub const ALL: [Configuration; 4] = [
        Configuration::Basic,
        Configuration::Pipelined,
        Configuration::Chiplets,
        Configuration::Both,
    ];

    pub fn pipelining(self) -> bool {
        matches!(self, Configuration::Pipelined | Configuration::Both)
    }

    pub fn chiplets(self) -> bool {
        matches!(self, Configuration::Chiplets | Configuration::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::Basic => "basic",
            Configuration::Pipelined => "pipelined",
            Configuration::Chiplets => "chiplets",
            Configuration::Both => "both",
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Configuration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Configuration::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown configuration '{s}' (expected basic, pipelined, chiplets or both)"))
    }
}

/// Makespans keyed by tile count and configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResultTable {
    rows: BTreeMap<u32, BTreeMap<Configuration, u64>>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from `(tiles, [basic, pipelined, chiplets, both])` rows.
    pub fn from_rows(rows: &[(u32, [u64; 4])]) -> Self {
        let mut t = Self::new();
        for (tiles, cells) in rows {
            for (config, &v) in Configuration::ALL.iter().zip(cells) {
                t.insert(*tiles, *config, v);
            }
        }
        t
    }

    pub fn insert(&mut self, tiles: u32, config: Configuration, makespan: u64) {
        self.rows.entry(tiles).or_default().insert(config, makespan);
    }

    pub fn get(&self, tiles: u32, config: Configuration) -> Option<u64> {
        self.rows.get(&tiles).and_then(|r| r.get(&config)).copied()
    }

    pub fn tiles(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows.keys().copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = (u32, Configuration, u64)> + '_ {
        self.rows
            .iter()
            .flat_map(|(&t, row)| row.iter().map(move |(&c, &v)| (t, c, v)))
    }

    pub fn column(&self, config: Configuration) -> Vec<(u32, u64)> {
        self.rows
            .iter()
            .filter_map(|(&t, row)| row.get(&config).map(|&v| (t, v)))
            .collect()
    }

    /// Only the given configuration, every row that has it.
    pub fn restrict(&self, configs: &[Configuration]) -> ResultTable {
        let mut out = ResultTable::new();
        for (t, c, v) in self.cells() {
            if configs.contains(&c) {
                out.insert(t, c, v);
            }
        }
        out
    }

    /// Every row carries every configuration present anywhere in the table.
    pub fn check_complete(&self) -> Result<(), MetricsError> {
        let present: Vec<Configuration> = Configuration::ALL
            .into_iter()
            .filter(|c| self.rows.values().any(|r| r.contains_key(c)))
            .collect();
        for (&tiles, row) in &self.rows {
            if let Some(&config) = present.iter().find(|c| !row.contains_key(c)) {
                return Err(MetricsError::Incomplete { tiles, config });
            }
        }
        Ok(())
    }

    /// `tiles,basic,pipelined,chiplets,both`; absent configurations export
    /// as empty cells only if the column is absent from every row.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        self.check_complete()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("tiles")
            .chain(Configuration::ALL.iter().map(|c| c.as_str()))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for (&tiles, row) in &self.rows {
            let mut rec = vec![tiles.to_string()];
            rec.extend(
                Configuration::ALL
                    .iter()
                    .map(|c| row.get(c).map(u64::to_string).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish(w)
    }

    /// Parses the CSV form; empty cells are left out of the table.
    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(csv_err)?.clone();
        if headers.get(0) != Some("tiles") {
            return Err(MetricsError::Csv("first column must be 'tiles'".into()));
        }
        let configs = headers
            .iter()
            .skip(1)
            .map(|h| h.parse::<Configuration>().map_err(MetricsError::Csv))
            .collect::<Result<Vec<_>, _>>()?;
        let mut table = ResultTable::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let tiles: u32 = parse_field(rec.get(0).unwrap_or(""))?;
            table.rows.entry(tiles).or_default();
            for (config, cell) in configs.iter().zip(rec.iter().skip(1)) {
                if !cell.trim().is_empty() {
                    table.insert(tiles, *config, parse_field(cell)?);
                }
            }
        }
        Ok(table)
    }
}

fn parse_field<T: FromStr>(s: &str) -> Result<T, MetricsError> {
    s.trim()
        .parse()
        .map_err(|_| MetricsError::Csv(format!("not an integer: '{s}'")))
}

fn csv_err(e: csv::Error) -> MetricsError {
    MetricsError::Csv(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, MetricsError> {
    let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Side-by-side table for several methods:
/// `tiles,outer_basic,...,outer_both,inner_basic,...`.
pub fn combined_csv(tables: &BTreeMap<Method, ResultTable>) -> Result<String, MetricsError> {
    let mut tiles: Vec<u32> = tables.values().flat_map(|t| t.tiles()).collect();
    tiles.sort_unstable();
    tiles.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["tiles".to_string()];
    for m in tables.keys() {
        header.extend(Configuration::ALL.iter().map(|c| format!("{m}_{c}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for t in tiles {
        let mut rec = vec![t.to_string()];
        for table in tables.values() {
            rec.extend(
                Configuration::ALL
                    .iter()
                    .map(|&c| table.get(t, c).map(|v| v.to_string()).unwrap_or_default()),
            );
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// Exact ratio `basic / variant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Speedup {
    pub basic: u64,
    pub variant: u64,
}

impl Speedup {
    pub fn as_f64(&self) -> f64 {
        self.basic as f64 / self.variant as f64
    }

    /// Truncated to three significant digits.
    pub fn formatted(&self) -> String {
        format_sig3(self.basic as u128, self.variant as u128)
    }
}

impl PartialOrd for Speedup {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Speedup {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.basic as u128 * other.variant as u128).cmp(&(other.basic as u128 * self.variant as u128))
    }
}

/// Formats `num/den` truncated (not rounded) to three significant digits:
/// `1208/324 -> "3.72"`, `1208/26 -> "46.4"`, `1/2 -> "0.500"`.
pub fn format_sig3(num: u128, den: u128) -> String {
    assert!(den > 0, "zero denominator");
    if num == 0 {
        return "0.00".to_string();
    }
    let whole = num / den;
    if whole >= 100 {
        let digits = whole.to_string().len() as u32;
        let scale = 10u128.pow(digits - 3);
        return (whole / scale * scale).to_string();
    }
    let mut decimals = 0u32;
    let mut v = whole;
    while v < 100 {
        decimals += 1;
        v = num * 10u128.pow(decimals) / den;
    }
    let s = format!("{v:0width$}", width = decimals as usize + 1);
    let (int, frac) = s.split_at(s.len() - decimals as usize);
    format!("{int}.{frac}")
}

/// Exact value of a plain decimal string as `(numerator, denominator)`.
pub fn parse_decimal(s: &str) -> Option<(u128, u128)> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    Some((digits.parse().ok()?, 10u128.checked_pow(frac.len() as u32)?))
}

/// Speedup of each non-basic configuration over basic, per tile count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeedupTable {
    rows: BTreeMap<u32, BTreeMap<Configuration, Speedup>>,
}

pub fn speedup_table(table: &ResultTable) -> Result<SpeedupTable, MetricsError> {
    let mut rows = BTreeMap::new();
    for (&tiles, row) in &table.rows {
        let basic = row
            .get(&Configuration::Basic)
            .copied()
            .filter(|&b| b > 0)
            .ok_or(MetricsError::MissingBasic { tiles })?;
        let cells = row
            .iter()
            .filter(|(c, &v)| **c != Configuration::Basic && v > 0)
            .map(|(&c, &v)| (c, Speedup { basic, variant: v }))
            .collect();
        rows.insert(tiles, cells);
    }
    Ok(SpeedupTable { rows })
}

impl SpeedupTable {
    pub fn get(&self, tiles: u32, config: Configuration) -> Option<Speedup> {
        self.rows.get(&tiles).and_then(|r| r.get(&config)).copied()
    }

    pub fn tiles(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows.keys().copied()
    }

    /// `tiles,pipelined,chiplets,both` with truncated speedup factors.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let variants = &Configuration::ALL[1..];
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("tiles")
            .chain(variants.iter().map(|c| c.as_str()))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for (&tiles, row) in &self.rows {
            let mut rec = vec![tiles.to_string()];
            rec.extend(
                variants
                    .iter()
                    .map(|c| row.get(c).map(Speedup::formatted).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CodeletId;
    use crate::machine::{build_machine, CuId, MachineSpec};
    use crate::trace::ConfigEcho;

    fn rec(cu: u32, start: Time, end: Time) -> TraceRecord {
        TraceRecord {
            codelet: CodeletId(0),
            label: "x".into(),
            kind: "user".into(),
            cu: CuId(cu),
            start,
            end,
        }
    }

    fn result(records: Vec<TraceRecord>) -> SimResult {
        SimResult {
            makespan: records.iter().map(|r| r.end).max().unwrap_or(0),
            records,
            busy: vec![],
            enabled_at: vec![],
            pipelined_edges: vec![],
            origin: 0,
            config: ConfigEcho {
                graph: "t".into(),
                tiles: None,
                pipelining: false,
                chiplets: false,
                policy: "fifo".into(),
                cu_counts: Default::default(),
            },
        }
    }

    #[test]
    fn makespan_examples() {
        assert_eq!(makespan(&[rec(0, 0, 5), rec(1, 2, 9), rec(2, 0, 7)]).unwrap(), 9);
        assert_eq!(makespan(&[rec(0, 0, 7)]).unwrap(), 7);
        assert_eq!(makespan(&[]), Err(MetricsError::EmptyTrace));
    }

    #[test]
    fn utilization_examples() {
        let one = build_machine(&MachineSpec::conventional(1)).unwrap();
        let mut r = result(vec![rec(0, 0, 5)]);
        r.makespan = 10;
        assert_eq!(utilization(&r, &one).unwrap().aggregate, 0.5);

        let two = build_machine(&MachineSpec::conventional(2)).unwrap();
        let full = result(vec![rec(0, 0, 4), rec(1, 0, 4)]);
        let u = utilization(&full, &two).unwrap();
        assert_eq!(u.aggregate, 1.0);
        assert_eq!(u.per_cu, vec![1.0, 1.0]);

        let half = result(vec![rec(0, 0, 10)]);
        let u = utilization(&half, &two).unwrap();
        assert_eq!(u.aggregate, 0.5);
        assert_eq!(u.per_cu, vec![1.0, 0.0]);

        assert_eq!(utilization(&result(vec![]), &two), Err(MetricsError::EmptyTrace));
    }

    #[test]
    fn sig3_truncates() {
        assert_eq!(format_sig3(1208, 324), "3.72");
        assert_eq!(format_sig3(1208, 26), "46.4");
        assert_eq!(format_sig3(1208, 94), "12.8");
        assert_eq!(format_sig3(5609, 1284), "4.36");
        assert_eq!(format_sig3(7, 7), "1.00");
        assert_eq!(format_sig3(1, 2), "0.500");
        assert_eq!(format_sig3(123, 10000), "0.0123");
        assert_eq!(format_sig3(124811, 1), "124000");
        assert_eq!(format_sig3(999, 1), "999");
        assert_eq!(format_sig3(0, 5), "0.00");
    }

    #[test]
    fn speedups_from_table() {
        let t = ResultTable::from_rows(&[(8, [1208, 324, 94, 26])]);
        let s = speedup_table(&t).unwrap();
        assert_eq!(s.get(8, Configuration::Pipelined).unwrap().formatted(), "3.72");
        assert_eq!(s.get(8, Configuration::Both).unwrap().formatted(), "46.4");
        assert!(s.get(8, Configuration::Both).unwrap() > s.get(8, Configuration::Chiplets).unwrap());
        assert_eq!(s.to_csv().unwrap(), "tiles,pipelined,chiplets,both\n8,3.72,12.8,46.4\n");

        let mut missing = ResultTable::new();
        missing.insert(16, Configuration::Pipelined, 3);
        assert_eq!(speedup_table(&missing), Err(MetricsError::MissingBasic { tiles: 16 }));
    }

    #[test]
    fn csv_roundtrip_and_partial_import() {
        let t = ResultTable::from_rows(&[(8, [1208, 324, 94, 26]), (16, [5609, 1284, 405, 93])]);
        let text = t.to_csv().unwrap();
        assert!(text.starts_with("tiles,basic,pipelined,chiplets,both\n8,1208,324,94,26\n"));
        assert_eq!(ResultTable::from_csv(&text).unwrap(), t);

        let partial = ResultTable::from_csv("tiles,basic,pipelined,chiplets,both\n8,1208,,,\n16,5609,,,\n").unwrap();
        assert_eq!(partial.column(Configuration::Basic), vec![(8, 1208), (16, 5609)]);
        assert!(partial.get(8, Configuration::Pipelined).is_none());

        let mut ragged = t.clone();
        ragged.insert(32, Configuration::Basic, 1);
        assert!(matches!(
            ragged.to_csv(),
            Err(MetricsError::Incomplete { tiles: 32, .. })
        ));
        assert!(ResultTable::from_csv("size,basic\n8,1\n").is_err());
        assert!(ResultTable::from_csv("tiles,basic\n8,x\n").is_err());
    }

    #[test]
    fn combined_layout() {
        let mut tables = BTreeMap::new();
        tables.insert(Method::Outer, ResultTable::from_rows(&[(8, [1, 2, 3, 4])]));
        tables.insert(Method::Inner, ResultTable::from_rows(&[(8, [5, 6, 7, 8])]));
        let text = combined_csv(&tables).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "tiles,outer_basic,outer_pipelined,outer_chiplets,outer_both,inner_basic,inner_pipelined,inner_chiplets,inner_both"
        );
        assert_eq!(lines.next().unwrap(), "8,1,2,3,4,5,6,7,8");
    }

    proptest::proptest! {
        #[test]
        fn sig3_is_idempotent(basic in 1u64..10_000_000, variant in 1u64..10_000_000) {
            let s = format_sig3(basic as u128, variant as u128);
            let (n, d) = parse_decimal(&s).unwrap();
            proptest::prop_assert_eq!(format_sig3(n, d), s.clone());
            // Truncation: the shown value never exceeds the exact ratio.
            proptest::prop_assert!(n * variant as u128 <= basic as u128 * d);
        }

        #[test]
        fn csv_roundtrip(rows in proptest::collection::btree_map(1u32..1000, proptest::array::uniform4(0u64..1_000_000), 1..6)) {
            let rows: Vec<_> = rows.into_iter().collect();
            let t = ResultTable::from_rows(&rows);
            proptest::prop_assert_eq!(ResultTable::from_csv(&t.to_csv().unwrap()).unwrap(), t);
        }
    }
}
