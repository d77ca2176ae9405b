use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drcgra::deps::{classify_all, find_deps};
use drcgra::exec::Execution;
use drcgra::grid::{map, GridSpec};
use drcgra::harness::{suite, sweep, Experiment, HarnessError, DEFAULT_THREADS};
use drcgra::ir::{read_dfg, validate, DataflowGraph};
use drcgra::sim::{render_trace, simulate_traced, MachineParams, Mode, SimError};
use drcgra::trace::{analyze, ingest, DEFAULT_MAX_LEN, DEFAULT_MAX_ROUTES};

#[derive(Parser)]
#[command(name = "drcgra", version, about = "Map, simulate and measure loop dataflow graphs on a multithreaded CGRA")]
struct Cli {
    /// Run independent jobs on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One line per loop-carried dependency.
    Analyze { dfg: PathBuf },
    /// Grid configuration as JSON.
    Map {
        dfg: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        mem_latency: u32,
    },
    /// Cycle-level run; the report goes to stdout as JSON.
    Sim {
        dfg: PathBuf,
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        threads: u32,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        mem_latency: Option<u32>,
        /// Spill round-trip cycles.
        #[arg(long)]
        spill: Option<u32>,
        /// Outstanding memory accesses; 0 means unbounded.
        #[arg(long)]
        mem_outstanding: Option<u32>,
        /// Write one line per unit event.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Both modes over an experiment's thread counts, as CSV.
    Sweep {
        #[arg(long)]
        exp: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every fixture in a directory, combined with its weights.
    Suite {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        threads: Option<Vec<u32>>,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Loop routes and run-time prevalence from a basic-block trace.
    Trace {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        min_routine_frac: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.90,0.95")]
        coverage: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_ROUTES)]
        max_routes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: &'static str,
    msg: String,
}

fn fail(code: &'static str, msg: impl ToString) -> Failure {
    Failure { code, msg: msg.to_string() }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        fail(e.code(), e)
    }
}

/// Exit status per error class.
fn exit_status(code: &str) -> u8 {
    match code {
        "E-IO" => 2,
        "E-SYNTAX" | "E-DANGLING" | "E-DUPSLOT" | "E-INVALID" => 3,
        "E-GRID" | "E-MAP" | "E-DEPS" => 4,
        "E-PARAMS" | "E-SIM" => 5,
        "E-DEADLOCK" => 6,
        "E-TRACE-SYNTAX" | "E-TRACE-MIXED" => 7,
        _ => 8,
    }
}

fn load(path: &Path) -> Result<DataflowGraph, Failure> {
    let g = read_dfg(path).map_err(|e| fail(e.code(), format!("{}: {e}", path.display())))?;
    for w in validate(&g) {
        eprintln!("{}: {w}", path.display());
    }
    Ok(g)
}

fn grid(path: Option<&Path>) -> Result<GridSpec, Failure> {
    match path {
        Some(p) => GridSpec::read(p).map_err(|e| fail("E-GRID", e)),
        None => Ok(GridSpec::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| fail("E-IO", format!("writing {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sim_failure(e: SimError) -> Failure {
    let code = match e {
        SimError::Deadlock { .. } => "E-DEADLOCK",
        SimError::InvalidParams(_) => "E-PARAMS",
        _ => "E-SIM",
    };
    fail(code, e)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.cmd {
        Cmd::Analyze { dfg } => {
            let g = load(&dfg)?;
            let deps = find_deps(&g).map_err(|e| fail("E-DEPS", e))?;
            let classes = classify_all(&g, &deps);
            let mut s = String::new();
            for (d, c) in deps.iter().zip(classes) {
                s += &format!(
                    "dep {}->{} slot={} diff={} pattern={} mem={} path_len={}\n",
                    d.producer,
                    d.consumer,
                    d.consumer_slot,
                    d.diff,
                    c.headline(),
                    u8::from(c.memory),
                    d.path_latency
                );
            }
            emit(None, &s)
        }
        Cmd::Map { dfg, grid: g, mem_latency } => {
            let d = load(&dfg)?;
            let cfg = map(&d, &grid(g.as_deref())?, mem_latency).map_err(|e| fail("E-MAP", e))?;
            emit(None, &(serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n"))
        }
        Cmd::Sim { dfg, mode, threads, grid: g, mem_latency, spill, mem_outstanding, trace } => {
            let d = load(&dfg)?;
            let mut params = MachineParams::new(mode, threads);
            if let Some(m) = mem_latency {
                params.mem_latency = m;
            }
            if let Some(s) = spill {
                params.spill_latency = s;
            }
            if let Some(c) = mem_outstanding {
                params.mem_max_outstanding = (c > 0).then_some(c);
            }
            let cfg = map(&d, &grid(g.as_deref())?, params.mem_latency).map_err(|e| fail("E-MAP", e))?;
            let (report, events) = simulate_traced(&cfg, &d, &params).map_err(sim_failure)?;
            if let Some(t) = trace {
                emit(Some(&t), &render_trace(&events))?;
            }
            emit(None, &(report.to_json() + "\n"))
        }
        Cmd::Sweep { exp, out } => {
            let e = Experiment::load(&exp)?;
            emit(out.as_deref(), &sweep(&e, exec)?.to_csv())
        }
        Cmd::Suite { dir, out, threads, grid: g } => {
            let threads = threads.unwrap_or_else(|| DEFAULT_THREADS.to_vec());
            let rep = suite(&dir, &threads, &grid(g.as_deref())?, &MachineParams::default(), exec)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            emit(out.as_deref(), &rep.to_csv())
        }
        Cmd::Trace { input, min_routine_frac, coverage, max_len, max_routes, out } => {
            if let Some(p) = coverage.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return Err(fail("E-USAGE", format!("coverage share {p} is outside (0, 1]")));
            }
            if !(0.0..=1.0).contains(&min_routine_frac) {
                return Err(fail("E-USAGE", format!("routine filter {min_routine_frac} is outside [0, 1]")));
            }
            let text = std::fs::read_to_string(&input)
                .map_err(|e| fail("E-IO", format!("reading {}: {e}", input.display())))?;
            let ingested = ingest(&text).map_err(|e| fail(e.code(), format!("{}: {e}", input.display())))?;
            let rep = analyze(&ingested, min_routine_frac, &coverage, max_len, max_routes, exec);
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            for c in &rep.coverage {
                eprintln!(
                    "coverage p={:.2}: {} of {} routes ({:.2}%)",
                    c.p,
                    c.routes_needed,
                    c.total_routes,
                    c.fraction * 100.0
                );
            }
            eprintln!("time in loops: {:.1}%", rep.loop_fraction * 100.0);
            emit(out.as_deref(), &(serde_json::to_string_pretty(&rep).expect("report serializes") + "\n"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::debug!("exiting with {}", f.code);
            eprintln!("error[{}]: {}", f.code, f.msg);
            ExitCode::from(exit_status(f.code))
        }
    }
}
