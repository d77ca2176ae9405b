use std::cmp::Reverse;

use serde::Serialize;

use super::{BbId, RoutineGraph};

pub const DEFAULT_MAX_LEN: usize = 32;
pub const DEFAULT_MAX_ROUTES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopRoute {
    /// The cycle, starting at its smallest block id.
    pub blocks: Vec<BbId>,
    /// Smallest traversal count of any edge on the cycle.
    pub iterations: u64,
    pub instrs_per_iteration: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoopEnumeration {
    pub routes: Vec<LoopRoute>,
    /// Enumeration stopped at `max_routes`.
    pub truncated: bool,
}

/// All simple cycles of at most `max_len` blocks, most iterated first, ties
/// by block sequence.
///
/// Each cycle is found once, from its smallest block, by a depth-first
/// search that only visits larger blocks.
pub fn enumerate_loops(g: &RoutineGraph, max_len: usize, max_routes: usize) -> LoopEnumeration {
    let mut out = LoopEnumeration::default();
    let mut path: Vec<BbId> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    'starts: for &start in g.blocks.keys() {
        path.clear();
        counts.clear();
        path.push(start);
        // Stack of successor lists still to explore, one per path entry.
        let mut stack: Vec<Vec<(BbId, u64)>> = vec![g.successors(start).collect()];
        while let Some(frame) = stack.last_mut() {
            let Some((next, c)) = (!frame.is_empty()).then(|| frame.remove(0)) else {
                stack.pop();
                path.pop();
                counts.pop();
                continue;
            };
            if next == start {
                if out.routes.len() == max_routes {
                    out.truncated = true;
                    break 'starts;
                }
                let iterations = counts.iter().copied().chain([c]).min().unwrap();
                out.routes.push(LoopRoute {
                    blocks: path.clone(),
                    iterations,
                    instrs_per_iteration: path.iter().map(|b| g.blocks[b].instr_count()).sum(),
                });
            } else if next > start && path.len() < max_len && !path.contains(&next) {
                path.push(next);
                counts.push(c);
                stack.push(g.successors(next).collect());
            }
        }
    }
    out.routes.sort_by(|a, b| (Reverse(a.iterations), &a.blocks).cmp(&(Reverse(b.iterations), &b.blocks)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::ingest;

    fn graph(agg: &str) -> RoutineGraph {
        ingest(&format!("#aggregated\n{agg}")).unwrap().routines.into_values().next().unwrap()
    }

    #[test]
    fn self_loop() {
        let e = enumerate_loops(&graph("r,1,1,10\n"), 32, 4096);
        assert_eq!(e.routes, vec![LoopRoute { blocks: vec![1], iterations: 10, instrs_per_iteration: 1 }]);
    }

    #[test]
    fn nested_cycles_share_an_edge() {
        // A->B->A and A->B->C->A.
        let g = graph("r,0,1,10\nr,1,0,6\nr,1,2,4\nr,2,0,4\n");
        let e = enumerate_loops(&g, 32, 4096);
        let seqs: Vec<_> = e.routes.iter().map(|r| (r.blocks.clone(), r.iterations)).collect();
        assert_eq!(seqs, vec![(vec![0, 1], 6), (vec![0, 1, 2], 4)]);
        assert!(!e.truncated);
    }

    #[test]
    fn dag_has_no_routes() {
        assert!(enumerate_loops(&graph("r,0,1,3\nr,1,2,3\nr,0,2,1\n"), 32, 4096).routes.is_empty());
    }

    #[test]
    fn caps() {
        let g = graph("r,0,1,1\nr,1,2,1\nr,2,0,1\nr,0,0,5\n");
        assert_eq!(enumerate_loops(&g, 2, 4096).routes.len(), 1);
        let capped = enumerate_loops(&g, 32, 1);
        assert!(capped.truncated);
        assert_eq!(capped.routes.len(), 1);
    }
}
