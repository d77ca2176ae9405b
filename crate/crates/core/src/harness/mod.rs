//! Experiment orchestration: thread sweeps and weighted pattern suites.

mod suite;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{par_map, Execution};
use crate::grid::{map, GridConfig, GridSpec, GridSpecError, MapError};
use crate::ir::{read_dfg, DataflowGraph, ParseError};
use crate::sim::{simulate, MachineParams, Mode, SimError};

pub use suite::{harmonic_combine, read_weights, suite, SuiteReport, SuiteRow, WEIGHTING_NOTE};

/// Thread counts used when an experiment or suite does not name any.
pub const DEFAULT_THREADS: [u32; 4] = [8, 32, 128, 512];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("experiment {path}: {msg}")]
    Experiment { path: String, msg: String },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error(transparent)]
    Grid(#[from] GridSpecError),
    #[error("{path}: {source}")]
    Map { path: String, source: MapError },
    #[error("{path} at T={threads} ({mode}): {source}")]
    Sim { path: String, threads: u32, mode: Mode, source: SimError },
    #[error("weights {path}: {msg}")]
    Weights { path: String, msg: String },
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "E-IO",
            HarnessError::Experiment { .. } => "E-EXPERIMENT",
            HarnessError::Parse { source, .. } => source.code(),
            HarnessError::Grid(_) => "E-GRID",
            HarnessError::Map { .. } => "E-MAP",
            HarnessError::Sim { source: SimError::Deadlock { .. }, .. } => "E-DEADLOCK",
            HarnessError::Sim { .. } => "E-SIM",
            HarnessError::Weights { .. } => "E-WEIGHTS",
        }
    }
}

/// Machine parameter overrides; absent fields keep the defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub mem_latency: Option<u32>,
    pub mem_max_outstanding: Option<OutstandingCap>,
    pub spill_latency: Option<u32>,
}

/// `8` or `"unbounded"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutstandingCap {
    Limit(u32),
    Named(Unbounded),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unbounded {
    Unbounded,
}

impl ParamOverrides {
    pub fn apply(&self, mut p: MachineParams) -> MachineParams {
        if let Some(v) = self.mem_latency {
            p.mem_latency = v;
        }
        if let Some(c) = self.mem_max_outstanding {
            p.mem_max_outstanding = match c {
                OutstandingCap::Limit(v) => Some(v),
                OutstandingCap::Named(Unbounded::Unbounded) => None,
            };
        }
        if let Some(v) = self.spill_latency {
            p.spill_latency = v;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub dfg: PathBuf,
    #[serde(default)]
    pub grid: Option<PathBuf>,
    #[serde(default = "default_threads")]
    pub threads: Vec<u32>,
    #[serde(default)]
    pub params: ParamOverrides,
    /// How often each point is re-simulated to time the simulator; the
    /// simulated cycle counts do not depend on it.
    #[serde(default = "one")]
    pub repetitions: u32,
}

fn default_threads() -> Vec<u32> {
    DEFAULT_THREADS.to_vec()
}

fn one() -> u32 {
    1
}

impl Experiment {
    /// Reads an experiment file; relative paths inside it are taken from
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Experiment, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        let bad = |msg: String| HarnessError::Experiment { path: path.display().to_string(), msg };
        let mut exp: Experiment = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        exp.dfg = base.join(&exp.dfg);
        exp.grid = exp.grid.map(|g| base.join(g));
        exp.check().map_err(bad)?;
        Ok(exp)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.threads.is_empty() {
            return Err("threads is empty".into());
        }
        if self.threads[0] == 0 {
            return Err("thread counts must be positive".into());
        }
        if self.threads.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("threads must be strictly increasing: {:?}", self.threads));
        }
        if self.repetitions == 0 {
            return Err("repetitions must be at least 1".into());
        }
        for p in std::iter::once(&self.dfg).chain(self.grid.as_ref()) {
            if !p.exists() {
                return Err(format!("{} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpeedupPoint {
    pub threads: u32,
    pub cycles_baseline: u64,
    pub cycles_dr: u64,
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupCurve {
    pub points: Vec<SpeedupPoint>,
}

impl SpeedupCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threads,cycles_baseline,cycles_dr,speedup\n");
        for p in &self.points {
            writeln!(s, "{},{},{},{:.6}", p.threads, p.cycles_baseline, p.cycles_dr, p.speedup).unwrap();
        }
        s
    }
}

/// A graph mapped once and simulated at several thread counts.
pub(crate) struct Prepared {
    pub label: String,
    pub dfg: DataflowGraph,
    pub config: GridConfig,
}

impl Prepared {
    pub fn load(path: &Path, spec: &GridSpec, params: &MachineParams) -> Result<Prepared, HarnessError> {
        let label = path.display().to_string();
        let dfg = read_dfg(path).map_err(|source| HarnessError::Parse { path: label.clone(), source })?;
        let config =
            map(&dfg, spec, params.mem_latency).map_err(|source| HarnessError::Map { path: label.clone(), source })?;
        Ok(Prepared { label, dfg, config })
    }

    pub fn cycles(&self, params: &MachineParams, mode: Mode, threads: u32) -> Result<u64, HarnessError> {
        let p = MachineParams { mode, n_threads: threads, ..*params };
        simulate(&self.config, &self.dfg, &p).map(|r| r.total_cycles).map_err(|source| HarnessError::Sim {
            path: self.label.clone(),
            threads,
            mode,
            source,
        })
    }
}

pub fn speedup(cycles_baseline: u64, cycles_dr: u64) -> f64 {
    cycles_baseline as f64 / cycles_dr as f64
}

/// Both modes at every thread count of the experiment.
pub fn sweep(exp: &Experiment, exec: Execution) -> Result<SpeedupCurve, HarnessError> {
    let spec = match &exp.grid {
        Some(p) => GridSpec::read(p)?,
        None => GridSpec::default(),
    };
    let params = exp.params.apply(MachineParams::default());
    let prepared = Prepared::load(&exp.dfg, &spec, &params)?;
    let jobs: Vec<(u32, Mode)> = exp.threads.iter().flat_map(|&t| [(t, Mode::Baseline), (t, Mode::Dr)]).collect();

    let started = Instant::now();
    let mut cycles = Vec::new();
    for _ in 0..exp.repetitions {
        cycles = par_map(&jobs, exec, |&(t, mode)| prepared.cycles(&params, mode, t))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
    }
    log::info!(
        "{}: {} simulations x {} repetitions in {:.3?}",
        prepared.label,
        jobs.len(),
        exp.repetitions,
        started.elapsed()
    );

    let points = exp
        .threads
        .iter()
        .zip(cycles.chunks(2))
        .map(|(&threads, c)| SpeedupPoint {
            threads,
            cycles_baseline: c[0],
            cycles_dr: c[1],
            speedup: speedup(c[0], c[1]),
        })
        .collect();
    Ok(SpeedupCurve { points })
}
