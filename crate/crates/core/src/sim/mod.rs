//! Cycle-level simulation of a mapped loop under a thread group.

mod engine;
mod ii;
mod token;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, GridConfig};
use crate::ir::{DataflowGraph, NodeId, Violation};
use crate::value::Value;

pub use ii::{steady_state_ii, IiError};
pub use token::{ildr_retag, retag_within, Token, TokenBuffer};
pub use trace::{render_trace, EventKind, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Loop-carried values are spilled out of the grid and re-injected.
    Baseline,
    /// Loop-carried values are retagged by ILDRs inside the grid.
    Dr,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Dr => "dr",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "dr" => Ok(Mode::Dr),
            other => Err(format!("unknown mode `{other}` (expected baseline or dr)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    pub mode: Mode,
    pub n_threads: u32,
    pub mem_latency: u32,
    /// Loads and stores in flight at once across the grid; `None` is
    /// unbounded.
    pub mem_max_outstanding: Option<u32>,
    /// Flat cost of leaving the grid and coming back, on top of the NoC
    /// route to and from the load/store port.
    pub spill_latency: u32,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams { mode: Mode::Dr, n_threads: 1, mem_latency: 20, mem_max_outstanding: Some(8), spill_latency: 8 }
    }
}

impl MachineParams {
    pub fn new(mode: Mode, n_threads: u32) -> Self {
        MachineParams { mode, n_threads, ..Default::default() }
    }

    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if self.n_threads == 0 {
            return bad("n_threads must be at least 1");
        }
        if self.mem_latency == 0 {
            return bad("mem_latency must be at least 1");
        }
        if self.mem_max_outstanding == Some(0) {
            return bad("mem_max_outstanding must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitReport {
    pub label: String,
    pub cell: Cell,
    pub fires: u64,
    /// Cycles spent holding a finished result for lack of buffer credit.
    pub stalls: u64,
    pub utilization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub mode: Mode,
    pub n_threads: u32,
    pub total_cycles: u64,
    pub units: Vec<UnitReport>,
    /// ILDR retags that landed past the last thread.
    pub dropped_retags: u64,
    /// Original-path tokens refused by a selector.
    pub selector_discards: u64,
    /// Memory accesses that reached memory out of thread order.
    pub mem_order_violations: u64,
    /// Per live-out node, one value per thread.
    pub live_out: BTreeMap<NodeId, Vec<Value>>,
    /// Largest mean issue interval over the second half of the threads.
    pub measured_ii: f64,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid machine parameters: {0}")]
    InvalidParams(String),
    #[error("graph is not executable: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("grid configuration does not match the graph: {0}")]
    ConfigMismatch(String),
    #[error("no livein value for node {node} slot {slot} in thread {thread}")]
    MissingLiveIn { node: NodeId, slot: usize, thread: u32 },
    #[error("node {node} in thread {thread} loads unmapped address {addr}")]
    OutOfRangeAddress { node: NodeId, thread: u32, addr: i64 },
    #[error("deadlock at cycle {cycle}: {detail}")]
    Deadlock { cycle: u64, detail: String },
}

pub fn simulate(config: &GridConfig, dfg: &DataflowGraph, params: &MachineParams) -> Result<SimReport, SimError> {
    engine::run(config, dfg, params, false).map(|(r, _)| r)
}

/// Like [`simulate`], also returning every unit event.
pub fn simulate_traced(
    config: &GridConfig,
    dfg: &DataflowGraph,
    params: &MachineParams,
) -> Result<(SimReport, Vec<TraceEvent>), SimError> {
    engine::run(config, dfg, params, true)
}
