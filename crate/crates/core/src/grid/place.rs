use std::collections::{BTreeMap, VecDeque};

use super::{Cell, GridSpec, MapError, UnitClass};
use crate::ir::{DataflowGraph, NodeId};

/// Greedy placement: nodes in breadth-first order from the sources, each on
/// the free cell of its class closest (summed hops) to its placed intra
/// predecessors. Ties go to the lowest (row, col).
///
/// Returns one cell per node id.
pub fn place(dfg: &DataflowGraph, spec: &GridSpec) -> Result<Vec<Cell>, MapError> {
    let mut needed: BTreeMap<UnitClass, usize> = BTreeMap::new();
    for n in &dfg.nodes {
        *needed.entry(UnitClass::of(&n.kind)).or_default() += 1;
    }
    for (&class, &needed) in &needed {
        let available = spec.cells_of(class).count();
        if needed > available {
            return Err(MapError::CapacityExceeded { class, needed, available });
        }
    }

    let n = dfg.nodes.len();
    let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (_, e) in dfg.intra_edges() {
        preds[e.dst].push(e.src);
        indeg[e.dst] += 1;
    }
    let succ = dfg.intra_successors();

    let mut queue: VecDeque<NodeId> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut used = vec![vec![false; spec.cols as usize]; spec.rows as usize];
    let mut placement: Vec<Option<Cell>> = vec![None; n];
    while let Some(v) = queue.pop_front() {
        let class = UnitClass::of(&dfg.nodes[v].kind);
        let placed_preds: Vec<Cell> = preds[v].iter().filter_map(|&p| placement[p]).collect();
        let cell = spec
            .cells_of(class)
            .filter(|c| !used[c.row as usize][c.col as usize])
            .min_by_key(|&c| (placed_preds.iter().map(|&p| c.hops(p)).sum::<u32>(), c))
            .expect("capacity checked");
        used[cell.row as usize][cell.col as usize] = true;
        placement[v] = Some(cell);
        for &w in &succ[v] {
            // `succ` is deduplicated; count every parallel edge.
            let k = preds[w].iter().filter(|&&p| p == v).count();
            indeg[w] -= k;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    Ok(placement.into_iter().map(|c| c.expect("valid graphs are acyclic")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_dfg_text;

    #[test]
    fn three_compute_nodes_on_two_by_two() {
        let dfg = parse_dfg_text("node 0 const 1\nnode 1 add\nnode 2 sink\nedge 0 1 1\nedge 1 2 0\nback 1 1 0 1\nlivein x 1 0 0\nliveout 2\n").unwrap();
        let spec =
            GridSpec::from_json(r#"{"rows":2,"cols":2,"unit_map":[["COMPUTE","COMPUTE"],["COMPUTE","COMPUTE"]]}"#)
                .unwrap();
        let p = place(&dfg, &spec).unwrap();
        assert_eq!(p, place(&dfg, &spec).unwrap());
        assert_eq!(p, vec![Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 1)]);
    }

    #[test]
    fn load_needs_ldst_cell() {
        let dfg = parse_dfg_text("node 0 load\nlivein i 0 0 tid\nliveout 0\nmem 0 1\n").unwrap();
        let spec = GridSpec::row("COMPUTE,COMPUTE").unwrap();
        assert_eq!(
            place(&dfg, &spec).unwrap_err(),
            MapError::CapacityExceeded { class: UnitClass::Ldst, needed: 1, available: 0 }
        );
    }
}
