use std::collections::BTreeMap;

use thiserror::Error;

use super::validate::{validate, Violation};
use super::{DataflowGraph, NodeId, OpKind, SlotSource};
use crate::value::Value;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("no livein value for node {node} slot {slot} in thread {thread}")]
    MissingLiveIn { node: NodeId, slot: usize, thread: u32 },
    #[error("node {node} in thread {thread} loads unmapped address {addr}")]
    OutOfRangeAddress { node: NodeId, thread: u32, addr: i64 },
    #[error("graph is not executable: {0:?}")]
    InvalidGraph(Vec<Violation>),
}

/// Live-out values, indexed by thread then node.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ThreadOutputs(pub Vec<BTreeMap<NodeId, Value>>);

impl ThreadOutputs {
    /// Per-node view: one value per thread, as the simulator reports it.
    pub fn by_node(&self) -> BTreeMap<NodeId, Vec<Value>> {
        let mut out: BTreeMap<NodeId, Vec<Value>> = BTreeMap::new();
        for thread in &self.0 {
            for (&node, &v) in thread {
                out.entry(node).or_default().push(v);
            }
        }
        out
    }
}

/// Runs iterations `0..n_threads` one after another on a single flat memory.
///
/// Within an iteration nodes execute in intra-edge topological order
/// (smallest id first among ready nodes). This is the functional reference
/// the cycle-level simulator is checked against; it knows nothing about
/// latencies.
pub fn reference_execute(dfg: &DataflowGraph, n_threads: u32) -> Result<ThreadOutputs, ExecError> {
    let errors: Vec<Violation> = validate(dfg).into_iter().filter(Violation::is_error).collect();
    if !errors.is_empty() {
        return Err(ExecError::InvalidGraph(errors));
    }
    let order = dfg.topo_order().expect("validated graph is acyclic");
    let sources: Vec<Vec<Option<SlotSource>>> = (0..dfg.nodes.len()).map(|id| dfg.slot_sources(id)).collect();

    let mut memory = dfg.memory.clone();
    let mut history: Vec<Vec<Value>> = Vec::with_capacity(n_threads as usize);
    let mut outputs = Vec::with_capacity(n_threads as usize);

    for t in 0..n_threads {
        let mut vals: Vec<Option<Value>> = vec![None; dfg.nodes.len()];
        for &id in &order {
            let kind = dfg.nodes[id].kind;
            let mut inputs = Vec::with_capacity(kind.arity());
            for (slot, src) in sources[id].iter().enumerate() {
                let missing = ExecError::MissingLiveIn { node: id, slot, thread: t };
                let v = match src.expect("validated slot") {
                    SlotSource::Intra(e) => vals[e.src].expect("topological order"),
                    SlotSource::Back(e, l) => {
                        let diff = e.diff().unwrap();
                        if t < diff {
                            l.values.value_for(t, false).ok_or(missing)?
                        } else {
                            history[(t - diff) as usize][e.src]
                        }
                    }
                    SlotSource::LiveIn(l) => l.values.value_for(t, true).ok_or(missing)?,
                };
                inputs.push(v);
            }
            let out = match kind {
                OpKind::Load => {
                    let addr = inputs[0].as_i64();
                    *memory.get(&addr).ok_or(ExecError::OutOfRangeAddress { node: id, thread: t, addr })?
                }
                OpKind::Store => {
                    memory.insert(inputs[0].as_i64(), inputs[1]);
                    inputs[1]
                }
                k => k.eval(&inputs),
            };
            vals[id] = Some(out);
        }
        let vals: Vec<Value> = vals.into_iter().map(|v| v.expect("every node ran")).collect();
        outputs.push(dfg.live_out.iter().map(|&o| (o, vals[o])).collect());
        history.push(vals);
    }
    Ok(ThreadOutputs(outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_dfg_text;

    fn column(g: &DataflowGraph, n: u32, node: NodeId) -> Vec<i64> {
        reference_execute(g, n).unwrap().by_node()[&node].iter().map(|v| v.as_i64()).collect()
    }

    #[test]
    fn accumulator_counts_up() {
        let g = parse_dfg_text("node 0 const 1\nnode 1 add\nedge 0 1 1\nback 1 1 0 1\nlivein x 1 0 0\nliveout 1\n")
            .unwrap();
        assert_eq!(column(&g, 4, 1), vec![1, 2, 3, 4]);
    }

    #[test]
    fn diff_two_interleaves_two_chains() {
        // Hand trace: t0 = 0+1, t1 = 10+1, t2 = t0+1, t3 = t1+1.
        let g = parse_dfg_text("node 0 const 1\nnode 1 add\nedge 0 1 1\nback 1 1 0 2\nlivein x 1 0 0 10\nliveout 1\n")
            .unwrap();
        assert_eq!(column(&g, 4, 1), vec![1, 11, 2, 12]);
    }

    #[test]
    fn load_accumulate_walks_memory() {
        // x += a[i], a = [5, 7, 9]: 5, 5+7, 12+9.
        let g = parse_dfg_text(
            "node 0 load\nnode 1 add\nedge 0 1 1\nback 1 1 0 1\nlivein i 0 0 tid\nlivein x 1 0 0\nliveout 1\nmem 0 5\nmem 1 7\nmem 2 9\n",
        )
        .unwrap();
        assert_eq!(column(&g, 3, 1), vec![5, 12, 21]);
    }

    #[test]
    fn unmapped_load_fails() {
        let g = parse_dfg_text("node 0 load\nlivein i 0 0 tid\nliveout 0\nmem 0 1\n").unwrap();
        assert_eq!(reference_execute(&g, 2).unwrap_err(), ExecError::OutOfRangeAddress { node: 0, thread: 1, addr: 1 });
    }

    #[test]
    fn per_thread_livein_must_cover_all_threads() {
        let g = parse_dfg_text("node 0 add\nlivein a 0 0 1 2\nlivein b 0 1 5\nliveout 0\n").unwrap();
        assert_eq!(column(&g, 2, 0), vec![6, 7]);
        assert_eq!(reference_execute(&g, 3).unwrap_err(), ExecError::MissingLiveIn { node: 0, slot: 0, thread: 2 });
    }

    #[test]
    fn store_then_load_in_thread_order() {
        // Each thread stores tid at address 100 then loads it back through
        // an ordering join.
        let g = parse_dfg_text(
            "node 0 const 100\nnode 1 store\nnode 2 splitjoin\nnode 3 load\nedge 0 1 0\nedge 1 2 1\nedge 2 3 0\nlivein i 1 1 tid\nlivein a 2 0 100\nliveout 3\n",
        )
        .unwrap();
        assert_eq!(column(&g, 3, 3), vec![0, 1, 2]);
    }
}
