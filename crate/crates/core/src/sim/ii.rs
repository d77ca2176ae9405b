use thiserror::Error;

use super::{MachineParams, Mode};
use crate::deps::{classify_all, find_deps_with, DepError, LoopPattern};
use crate::grid::{Feedback, GridConfig};
use crate::ir::DataflowGraph;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IiError {
    #[error("no closed form: {0}")]
    UnsupportedPattern(String),
    #[error(transparent)]
    Deps(#[from] DepError),
}

/// Closed-form steady-state initiation interval for a loop with one
/// loop-carried dependency.
///
/// The recurrence bound is the time from the consumer issuing thread `t` to
/// thread `t + diff` finding its operand: unit and route latencies along the
/// dependent path, then either the ILDR feedback (one cycle locally, or the
/// trip through the update node) or the spill round trip. It is divided by
/// `diff`, and the result is raised to the memory bandwidth bound and to one
/// issue per cycle.
pub fn steady_state_ii(config: &GridConfig, dfg: &DataflowGraph, params: &MachineParams) -> Result<f64, IiError> {
    let spec = &config.spec;
    let deps = find_deps_with(dfg, &spec.latencies, params.mem_latency)?;
    let [dep] = deps.as_slice() else {
        return Err(IiError::UnsupportedPattern(format!("expected one loop-carried dependency, found {}", deps.len())));
    };
    if classify_all(dfg, &deps)[0].pattern == LoopPattern::Consecutive {
        return Err(IiError::UnsupportedPattern("consecutive updates".into()));
    }

    let unit = |v: usize| spec.latencies.of(&dfg.nodes[v].kind, params.mem_latency);
    let mut path: u32 = dep.dependent_path.iter().map(|&v| unit(v)).sum();
    for w in dep.dependent_path.windows(2) {
        let hop = config
            .routes
            .iter()
            .filter(|r| r.src == w[0] && r.dst == w[1])
            .map(|r| r.latency)
            .min()
            .ok_or_else(|| IiError::UnsupportedPattern(format!("no route {}->{}", w[0], w[1])))?;
        path += hop;
    }

    let spilled = || -> Result<u32, IiError> {
        let s = config
            .spill(dep.back_edge)
            .ok_or_else(|| IiError::UnsupportedPattern("back edge has no spill route".into()))?;
        Ok(s.latency + params.spill_latency)
    };
    let feedback = match params.mode {
        Mode::Baseline => spilled()?,
        Mode::Dr => match config.ildr_edges.iter().find(|i| i.edge == dep.back_edge) {
            None => spilled()?,
            Some(i) => match i.feedback {
                Feedback::Local => 1,
                Feedback::Eor { index } => {
                    let e = &config.eor_updates[index];
                    e.in_latency + spec.latencies.alu + e.out_latency
                }
            },
        },
    };
    let recurrence = (path + feedback) as f64 / dep.diff as f64;

    let memory = match params.mem_max_outstanding {
        None => 0.0,
        Some(cap) => {
            let busy: u32 = dfg.nodes.iter().filter(|n| n.kind.is_memory()).map(|n| unit(n.id)).sum();
            busy as f64 / cap as f64
        }
    };
    Ok(recurrence.max(memory).max(1.0))
}
