//! Basic-block trace analysis: per-routine control-flow graphs, closed loop
//! routes, and how much of the run time they account for.
//!
//! Run time is measured in dynamic instructions; traces carry no clock.

mod ingest;
mod loops;
mod report;

use std::collections::BTreeMap;

use serde::Serialize;

pub use ingest::{ingest, Ingested, TraceError};
pub use loops::{enumerate_loops, LoopEnumeration, LoopRoute, DEFAULT_MAX_LEN, DEFAULT_MAX_ROUTES};
pub use report::{analyze, coverage, prevalence_report, Coverage, PrevalenceReport, RouteStats, RoutineStats};

pub type BbId = u64;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Block {
    /// Instructions per execution; 1 when the trace never says.
    pub instrs: Option<u64>,
    pub execs: u64,
}

impl Block {
    pub fn instr_count(&self) -> u64 {
        self.instrs.unwrap_or(1)
    }

    pub fn dynamic_instrs(&self) -> u64 {
        self.execs * self.instr_count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoutineGraph {
    pub name: String,
    pub blocks: BTreeMap<BbId, Block>,
    /// Traversal count per (source, destination).
    pub edges: BTreeMap<(BbId, BbId), u64>,
}

impl RoutineGraph {
    pub fn new(name: &str) -> RoutineGraph {
        RoutineGraph { name: name.to_string(), blocks: BTreeMap::new(), edges: BTreeMap::new() }
    }

    pub fn successors(&self, bb: BbId) -> impl Iterator<Item = (BbId, u64)> + '_ {
        self.edges.range((bb, BbId::MIN)..=(bb, BbId::MAX)).map(|(&(_, d), &c)| (d, c))
    }

    pub fn successor_counts(&self) -> BTreeMap<BbId, usize> {
        let mut out = BTreeMap::new();
        for &(s, _) in self.edges.keys() {
            *out.entry(s).or_default() += 1;
        }
        out
    }

    pub fn dynamic_instrs(&self) -> u64 {
        self.blocks.values().map(Block::dynamic_instrs).sum()
    }
}
