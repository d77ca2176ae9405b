//! Loop-carried dependency discovery and pattern classification.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::grid::LatencyTable;
use crate::ir::{DataflowGraph, NodeId, OpKind};

/// Load latency assumed when no machine parameters are at hand.
pub const DEFAULT_MEM_LATENCY: u32 = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopCarriedDep {
    /// Index into `DataflowGraph::edges`.
    pub back_edge: usize,
    pub producer: NodeId,
    pub consumer: NodeId,
    pub consumer_slot: usize,
    pub diff: u32,
    /// Consumer first, producer last, intra edges only.
    pub dependent_path: Vec<NodeId>,
    /// Sum of unit latencies along `dependent_path`.
    pub path_latency: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LoopPattern {
    SinglePath,
    DivergingAfter,
    DivergingBefore,
    BackgroundMemory,
    Consecutive,
}

impl fmt::Display for LoopPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DepError {
    #[error("back edge {producer}->{consumer}: consumer does not reach producer through intra edges")]
    MalformedLoop { producer: NodeId, consumer: NodeId },
}

pub fn find_deps(dfg: &DataflowGraph) -> Result<Vec<LoopCarriedDep>, DepError> {
    find_deps_with(dfg, &LatencyTable::default(), DEFAULT_MEM_LATENCY)
}

/// One record per back edge, in declaration order.
///
/// When several intra paths lead from consumer to producer the one with the
/// largest latency sum wins, then the lexicographically smallest id sequence.
pub fn find_deps_with(
    dfg: &DataflowGraph,
    latencies: &LatencyTable,
    mem_latency: u32,
) -> Result<Vec<LoopCarriedDep>, DepError> {
    let lat: Vec<u32> = dfg.nodes.iter().map(|n| latencies.of(&n.kind, mem_latency)).collect();
    let order = dfg.topo_order().unwrap_or_default();
    let succ = dfg.intra_successors();
    let mut out = Vec::new();
    for (idx, e) in dfg.back_edges() {
        let (producer, consumer) = (e.src, e.dst);
        let path = longest_path(&order, &succ, &lat, consumer, producer)
            .ok_or(DepError::MalformedLoop { producer, consumer })?;
        out.push(LoopCarriedDep {
            back_edge: idx,
            producer,
            consumer,
            consumer_slot: e.slot,
            diff: e.diff().unwrap(),
            path_latency: path.iter().map(|&v| lat[v]).sum(),
            dependent_path: path,
        });
    }
    Ok(out)
}

fn longest_path(order: &[NodeId], succ: &[Vec<NodeId>], lat: &[u32], from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
    let mut best: Vec<Option<(u32, Vec<NodeId>)>> = vec![None; lat.len()];
    best[from] = Some((lat[from], vec![from]));
    let start = order.iter().position(|&v| v == from)?;
    for &u in &order[start..] {
        let Some((len, seq)) = best[u].clone() else { continue };
        for &v in &succ[u] {
            let cand_len = len + lat[v];
            let better = match &best[v] {
                None => true,
                Some((l, s)) => match cand_len.cmp(l) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => seq.iter().chain([&v]).lt(s.iter()),
                },
            };
            if better {
                let mut s = seq.clone();
                s.push(v);
                best[v] = Some((cand_len, s));
            }
        }
    }
    best[to].take().map(|(_, s)| s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub pattern: LoopPattern,
    /// Any LOAD or STORE in the loop body.
    pub memory: bool,
}

impl Classification {
    /// The single label used in reports: a single-path dependency next to
    /// memory traffic is reported as background memory.
    pub fn headline(&self) -> LoopPattern {
        match self.pattern {
            LoopPattern::SinglePath if self.memory => LoopPattern::BackgroundMemory,
            p => p,
        }
    }
}

/// Classifies `dep` against all dependencies of `dfg`.
pub fn classify(dfg: &DataflowGraph, dep: &LoopCarriedDep) -> Classification {
    let all = find_deps(dfg).unwrap_or_default();
    classify_among(dfg, dep, &all)
}

pub fn classify_all(dfg: &DataflowGraph, deps: &[LoopCarriedDep]) -> Vec<Classification> {
    deps.iter().map(|d| classify_among(dfg, d, deps)).collect()
}

/// Sinks only observe values, so they never make a path diverge.
fn classify_among(dfg: &DataflowGraph, dep: &LoopCarriedDep, all: &[LoopCarriedDep]) -> Classification {
    let memory = dfg.has_memory_ops();
    let on_path: BTreeSet<NodeId> = dep.dependent_path.iter().copied().collect();
    let consecutive = all
        .iter()
        .filter(|o| o.back_edge != dep.back_edge)
        .any(|o| o.dependent_path.iter().any(|v| on_path.contains(v)));
    let leaves = |from: NodeId| {
        dfg.intra_edges()
            .any(|(_, e)| e.src == from && !on_path.contains(&e.dst) && !matches!(dfg.nodes[e.dst].kind, OpKind::Sink))
    };
    let pattern = if consecutive {
        LoopPattern::Consecutive
    } else if on_path.iter().any(|&v| v != dep.producer && leaves(v)) {
        LoopPattern::DivergingBefore
    } else if leaves(dep.producer) {
        LoopPattern::DivergingAfter
    } else {
        LoopPattern::SinglePath
    };
    Classification { pattern, memory }
}
