//! `camsim` command line: generate GEMM graphs, run simulations, sweep
//! configurations and calibrate delay profiles.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 deadlock,
//! 3 I/O error. Diagnostics go to the error stream.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use camsim_core::calibrate::{calibrate, residual_report, SearchBounds};
use camsim_core::delay::PAPER_CALIBRATED;
use camsim_core::engine::{run, SimConfig, SimError};
use camsim_core::experiment::{sweep, Experiment, ExperimentError};
use camsim_core::gantt::export_gantt;
use camsim_core::gemm::{generate, GemmParams};
use camsim_core::machine::{build_machine, MachineSpec, OddSplit};
use camsim_core::metrics::{combined_csv, speedup_table, utilization, Configuration, ResultTable};
use camsim_core::reference::published_table;
use camsim_core::{CodeletGraph, DelayProfile, Method};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

/// Environment variable naming a directory searched for profile files.
pub const PROFILE_DIR_ENV: &str = "CAMSIM_PROFILE_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Deadlock(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Deadlock(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            // A codelet with no compatible unit can never run: a deadlock
            // found before the run starts.
            SimError::Deadlock(_) | SimError::ClassUnavailable { .. } => CliError::Deadlock(e.to_string()),
            other => config_err(other),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e.root() {
            ExperimentError::Sim(SimError::Deadlock(_) | SimError::ClassUnavailable { .. }) => {
                CliError::Deadlock(e.to_string())
            }
            _ => config_err(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "camsim", version, about = "Codelet model discrete-event simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a tiled GEMM codelet graph file.
    Gen(GenArgs),
    /// Simulate a graph file and write its trace.
    Run(RunArgs),
    /// Run every method × tiles × configuration cell and write makespan and
    /// speedup tables.
    Sweep(SweepArgs),
    /// Fit a delay profile to a makespan table.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    tiles: u32,
    /// Mark stage codelets pipeline-enabled.
    #[arg(long)]
    pipeline: bool,
    /// Assign chiplet resource classes to stage codelets.
    #[arg(long)]
    chiplets: bool,
    /// "paper-calibrated", a profile file, or a name in $CAMSIM_PROFILE_DIR.
    #[arg(long, default_value = PAPER_CALIBRATED)]
    profile: String,
    /// Output file; standard output if omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Machine file. Without it, `--cus` conventional units, or with
    /// `--chiplets` the same total split between classes.
    #[arg(long)]
    machine: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    cus: u32,
    #[arg(long)]
    pipeline: bool,
    #[arg(long)]
    chiplets: bool,
    #[arg(long, default_value = "fifo")]
    policy: String,
    /// Profile whose chiplet multipliers apply; the defaults otherwise.
    #[arg(long)]
    profile: Option<String>,
    /// Trace output file; standard output if omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write a Gantt chart SVG.
    #[arg(long)]
    gantt: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [Method::Outer, Method::Inner])]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64])]
    tiles: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "basic,pipelined,chiplets,both")]
    configs: Vec<Configuration>,
    #[arg(long, default_value_t = 64)]
    cus: u32,
    /// "paper-calibrated", or profile files (one per method family). Repeatable.
    #[arg(long, default_value = PAPER_CALIBRATED)]
    profile: Vec<String>,
    /// Directory for table.csv, <method>.csv and <method>_speedup.csv.
    /// Without it the combined table goes to standard output.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    method: Method,
    /// Makespan CSV (tiles,basic,pipelined,chiplets,both), or "published"
    /// for the built-in 64-unit reference table.
    #[arg(long)]
    target: String,
    /// Profile output file; standard output if omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Residual report file; standard error if omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    denominator: Option<i64>,
    #[arg(long)]
    max_numerator: Option<i64>,
    #[arg(long)]
    max_degree: Option<u32>,
    #[arg(long)]
    cus: Option<u32>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_io(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`run_command`] with explicit output and diagnostic streams.
pub fn run_with_io<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a, out),
        Command::Run(a) => run_sim(a, out, err),
        Command::Sweep(a) => run_sweep(a, out),
        Command::Calibrate(a) => run_calibrate(a, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "camsim: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

/// Resolves a profile argument: the built-in name, an existing file, or a
/// file in the profile directory (with or without a `.json` suffix).
pub fn resolve_profile(arg: &str, method: Method, dir: Option<&Path>) -> Result<DelayProfile, CliError> {
    if arg == PAPER_CALIBRATED {
        return Ok(DelayProfile::paper_calibrated(method));
    }
    let profile = load_profile(arg, dir)?;
    if profile.family != method {
        return Err(CliError::Config(format!(
            "profile '{arg}' is for the {} family, not {method}",
            profile.family
        )));
    }
    Ok(profile)
}

fn load_profile(arg: &str, dir: Option<&Path>) -> Result<DelayProfile, CliError> {
    let direct = PathBuf::from(arg);
    let mut candidates = vec![direct.clone()];
    if let Some(d) = dir {
        candidates.push(d.join(arg));
        candidates.push(d.join(format!("{arg}.json")));
    }
    let path = candidates.into_iter().find(|p| p.is_file()).unwrap_or(direct);
    DelayProfile::from_json(&read(&path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn profile_dir() -> Option<PathBuf> {
    std::env::var_os(PROFILE_DIR_ENV).map(PathBuf::from)
}

fn gen(a: GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let profile = resolve_profile(&a.profile, a.method, profile_dir().as_deref())?;
    let params = GemmParams::new(a.method, a.tiles, profile)
        .pipeline(a.pipeline)
        .chiplets(a.chiplets);
    let graph = generate(&params).map_err(config_err)?;
    emit(a.out.as_deref(), &(graph.to_json() + "\n"), out)
}

fn run_sim(a: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let graph = CodeletGraph::from_json(&read(&a.graph)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.graph.display())))?;
    let spec = match &a.machine {
        Some(p) => MachineSpec::from_json(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None if a.chiplets => MachineSpec::chiplet_split(a.cus, OddSplit::default()).map_err(config_err)?,
        None => MachineSpec::conventional(a.cus),
    };
    let machine = build_machine(&spec).map_err(config_err)?;
    let mut config = SimConfig::new(a.pipeline, a.chiplets);
    config.policy = a.policy;
    if let Some(p) = &a.profile {
        config.multipliers = load_profile(p, profile_dir().as_deref())?.multipliers;
    }
    let result = run(&graph, &machine, &config)?;
    emit(a.out.as_deref(), &(result.trace_json() + "\n"), out)?;
    if let Some(path) = &a.gantt {
        write_file(path, &export_gantt(&result.records, &machine).map_err(config_err)?)?;
    }
    let util = utilization(&result, &machine)
        .map(|u| format!("{:.3}", u.aggregate))
        .unwrap_or_else(|_| "-".into());
    let _ = writeln!(err, "makespan {} utilization {util}", result.makespan);
    Ok(())
}

fn sweep_profiles(args: &[String], methods: &[Method]) -> Result<BTreeMap<Method, DelayProfile>, CliError> {
    let dir = profile_dir();
    let mut profiles = BTreeMap::new();
    for arg in args {
        if arg == PAPER_CALIBRATED {
            for &m in methods {
                profiles.entry(m).or_insert_with(|| DelayProfile::paper_calibrated(m));
            }
        } else {
            let p = load_profile(arg, dir.as_deref())?;
            profiles.insert(p.family, p);
        }
    }
    if let Some(m) = methods.iter().find(|m| !profiles.contains_key(m)) {
        return Err(CliError::Config(format!("no profile given for the {m} method")));
    }
    Ok(profiles)
}

fn run_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let profiles = sweep_profiles(&a.profile, &a.methods)?;
    let exp = Experiment {
        methods: a.methods,
        tiles: a.tiles,
        configs: a.configs,
        cus: a.cus,
    };
    let tables = sweep(&exp, &profiles)?;
    let combined = combined_csv(&tables).map_err(config_err)?;
    match &a.out_dir {
        None => emit(None, &combined, out),
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            write_file(&dir.join("table.csv"), &combined)?;
            for (method, table) in &tables {
                write_file(&dir.join(format!("{method}.csv")), &table.to_csv().map_err(config_err)?)?;
                if table.column(Configuration::Basic).is_empty() {
                    continue;
                }
                let speedups = speedup_table(table).map_err(config_err)?;
                write_file(
                    &dir.join(format!("{method}_speedup.csv")),
                    &speedups.to_csv().map_err(config_err)?,
                )?;
            }
            Ok(())
        }
    }
}

fn run_calibrate(a: CalibrateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let target = if a.target == "published" {
        published_table(a.method)
    } else {
        let path = PathBuf::from(&a.target);
        ResultTable::from_csv(&read(&path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    let mut bounds = SearchBounds::for_family(a.method);
    if let Some(d) = a.denominator {
        bounds.denominator = d;
    }
    if let Some(n) = a.max_numerator {
        bounds.max_numerator = n;
    }
    if let Some(d) = a.max_degree {
        bounds.max_degree = d;
    }
    if let Some(c) = a.cus {
        bounds.cus = c;
    }
    let result = calibrate(&target, a.method, &bounds).map_err(config_err)?;
    emit(a.out.as_deref(), &(result.profile.to_json() + "\n"), out)?;
    let report = residual_report(&result);
    match &a.report {
        Some(p) => write_file(p, &report),
        None => {
            let _ = write!(err, "{report}");
            Ok(())
        }
    }
}
