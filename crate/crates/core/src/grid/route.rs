use serde::Serialize;

use super::{Cell, GridSpec};
use crate::ir::{DataflowGraph, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Route {
    /// Index into `DataflowGraph::edges`.
    pub edge: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub slot: usize,
    /// Source and destination cells included.
    pub path: Vec<Cell>,
    pub latency: u32,
}

/// Dimension-ordered path: along the row to the destination column, then
/// along the column.
pub fn xy_path(from: Cell, to: Cell) -> Vec<Cell> {
    let mut path = vec![from];
    let mut cur = from;
    while cur.col != to.col {
        cur.col = if cur.col < to.col { cur.col + 1 } else { cur.col - 1 };
        path.push(cur);
    }
    while cur.row != to.row {
        cur.row = if cur.row < to.row { cur.row + 1 } else { cur.row - 1 };
        path.push(cur);
    }
    path
}

/// Routes every intra edge. Links are never shared-limited, so a route's
/// latency is just its hop count times the hop latency.
pub fn route(placement: &[Cell], dfg: &DataflowGraph, spec: &GridSpec) -> Vec<Route> {
    dfg.intra_edges()
        .map(|(edge, e)| {
            let (a, b) = (placement[e.src], placement[e.dst]);
            Route { edge, src: e.src, dst: e.dst, slot: e.slot, path: xy_path(a, b), latency: spec.route_latency(a, b) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_cell_is_free() {
        let c = Cell::new(3, 3);
        assert_eq!(xy_path(c, c), vec![c]);
        assert_eq!(GridSpec::default().route_latency(c, c), 0);
    }

    #[test]
    fn manhattan_latency() {
        let (a, b) = (Cell::new(0, 0), Cell::new(2, 3));
        let path = xy_path(a, b);
        assert_eq!(path.len(), 6);
        assert_eq!(path[3], Cell::new(0, 3));
        assert!(path.windows(2).all(|w| w[0].hops(w[1]) == 1));
        assert_eq!(GridSpec::default().route_latency(a, b), 5);
        let slow = GridSpec { hop_latency: 3, ..GridSpec::default() };
        assert_eq!(slow.route_latency(b, a), 15);
    }
}
