use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{route, Cell, GridSpec, MapError, Route, UnitClass};
use crate::deps::{classify_all, LoopCarriedDep, LoopPattern};
use crate::ir::{DataflowGraph, NodeId};

/// How an ILDR's retagged output reaches the dependent slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Feedback {
    /// Producer and consumer share the unit; the retag is written straight
    /// back into its own token buffer.
    Local,
    /// Through the end-of-route update node `eor_updates[index]`.
    Eor { index: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IldrEdge {
    pub edge: usize,
    pub producer: NodeId,
    pub consumer: NodeId,
    pub slot: usize,
    pub diff: u32,
    /// Threads whose dependent operand still comes from the original input.
    pub selector_init: u32,
    pub feedback: Feedback,
}

/// Identity unit at the end of a multi-node dependent path. It takes the
/// producer's final value and, retagged, writes it into the consumer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EorUpdate {
    /// Synthetic id, numbered after the graph's own nodes.
    pub node: NodeId,
    pub edge: usize,
    pub producer: NodeId,
    pub consumer: NodeId,
    pub cell: Cell,
    pub in_latency: u32,
    pub out_latency: u32,
}

/// Path a loop-carried value takes when spilled: out through the nearest
/// load/store port and back in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpillRoute {
    pub edge: usize,
    pub producer: NodeId,
    pub consumer: NodeId,
    pub slot: usize,
    pub diff: u32,
    pub port: Cell,
    /// NoC cycles only; the machine's flat spill cost comes on top.
    pub latency: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GridConfig {
    pub spec: GridSpec,
    /// Cell of each node, by node id.
    pub placement: Vec<Cell>,
    pub routes: Vec<Route>,
    /// One per back edge, used wherever the edge is not resolved in-grid.
    pub spills: Vec<SpillRoute>,
    pub ildr_edges: Vec<IldrEdge>,
    pub eor_updates: Vec<EorUpdate>,
    /// Back edges left to spilling even when ILDRs are enabled.
    pub baseline_edges: Vec<usize>,
}

impl GridConfig {
    pub fn spill(&self, edge: usize) -> Option<&SpillRoute> {
        self.spills.iter().find(|s| s.edge == edge)
    }

    pub fn route_of(&self, edge: usize) -> Option<&Route> {
        self.routes.iter().find(|r| r.edge == edge)
    }
}

/// Decides, per dependency, between in-grid resolution and spilling, and
/// places the end-of-route update nodes the in-grid choice needs.
///
/// Dependencies whose path is shared with another dependency (several
/// updates of one variable) stay on the spill path. Every other dependency
/// gets an ILDR with `selector_init = diff`; when its path spans more than
/// one unit the feedback goes through an update node placed between
/// producer and consumer.
pub fn attach_ildr(
    dfg: &DataflowGraph,
    deps: &[LoopCarriedDep],
    placement: &[Cell],
    spec: &GridSpec,
) -> Result<GridConfig, MapError> {
    let mut per_node: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (_, e) in dfg.back_edges() {
        *per_node.entry(e.dst).or_default() += 1;
    }
    if let Some((&node, _)) = per_node.iter().find(|(_, &k)| k > 1) {
        return Err(MapError::UnsupportedDualDependency { node });
    }

    let routes = route(placement, dfg, spec);
    let mut used: BTreeSet<Cell> = placement.iter().copied().collect();
    let ports: Vec<Cell> = {
        let ldst: Vec<Cell> = spec.cells_of(UnitClass::Ldst).collect();
        if ldst.is_empty() {
            spec.cells().filter(|c| c.col == 0).collect()
        } else {
            ldst
        }
    };

    let mut spills = Vec::new();
    for (edge, e) in dfg.back_edges() {
        let (a, b) = (placement[e.src], placement[e.dst]);
        let port = *ports.iter().min_by_key(|&&c| (a.hops(c) + c.hops(b), c)).expect("grid has cells");
        spills.push(SpillRoute {
            edge,
            producer: e.src,
            consumer: e.dst,
            slot: e.slot,
            diff: e.diff().unwrap(),
            port,
            latency: (a.hops(port) + port.hops(b)) * spec.hop_latency,
        });
    }

    let mut ildr_edges = Vec::new();
    let mut eor_updates = Vec::new();
    let mut baseline_edges = Vec::new();
    for (dep, class) in deps.iter().zip(classify_all(dfg, deps)) {
        if class.pattern == LoopPattern::Consecutive {
            baseline_edges.push(dep.back_edge);
            continue;
        }
        let feedback = if dep.producer == dep.consumer {
            Feedback::Local
        } else {
            let (a, b) = (placement[dep.producer], placement[dep.consumer]);
            let free = spec.cells_of(UnitClass::Compute).filter(|c| !used.contains(c));
            let Some(cell) = free.min_by_key(|&c| (a.hops(c) + c.hops(b), c)) else {
                let available = spec.cells_of(UnitClass::Compute).count();
                return Err(MapError::CapacityExceeded { class: UnitClass::Compute, needed: available + 1, available });
            };
            used.insert(cell);
            eor_updates.push(EorUpdate {
                node: dfg.nodes.len() + eor_updates.len(),
                edge: dep.back_edge,
                producer: dep.producer,
                consumer: dep.consumer,
                cell,
                in_latency: spec.route_latency(a, cell),
                out_latency: spec.route_latency(cell, b),
            });
            Feedback::Eor { index: eor_updates.len() - 1 }
        };
        ildr_edges.push(IldrEdge {
            edge: dep.back_edge,
            producer: dep.producer,
            consumer: dep.consumer,
            slot: dep.consumer_slot,
            diff: dep.diff,
            selector_init: dep.diff,
            feedback,
        });
    }

    Ok(GridConfig {
        spec: spec.clone(),
        placement: placement.to_vec(),
        routes,
        spills,
        ildr_edges,
        eor_updates,
        baseline_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deps::find_deps;
    use crate::grid::{map, place};
    use crate::ir::parse_dfg_text;

    fn config(src: &str, spec: &GridSpec) -> Result<GridConfig, MapError> {
        map(&parse_dfg_text(src).unwrap(), spec, 20)
    }

    #[test]
    fn self_loop_gets_local_ildr() {
        let c = config(
            "node 0 const 1\nnode 1 add\nedge 0 1 1\nback 1 1 0 1\nlivein x 1 0 0\nliveout 1\n",
            &GridSpec::default(),
        )
        .unwrap();
        assert_eq!(c.ildr_edges.len(), 1);
        assert_eq!(c.ildr_edges[0].selector_init, 1);
        assert_eq!(c.ildr_edges[0].feedback, Feedback::Local);
        assert!(c.eor_updates.is_empty());
        // add sits at (0,4); the nearest load/store port is (0,1).
        assert_eq!(c.placement[1], Cell::new(0, 4));
        assert_eq!(c.spills[0].port, Cell::new(0, 1));
        assert_eq!(c.spills[0].latency, 6);
    }

    #[test]
    fn multi_node_path_gets_update_node() {
        let c = config(
            "node 0 add\nnode 1 mul\nnode 2 sub\nedge 0 1 0\nedge 0 2 0\nback 1 0 0 2\nlivein x 0 0 0 1\nlivein a 0 1 1\nlivein b 1 1 2\nlivein c 2 1 3\nliveout 2\n",
            &GridSpec::default(),
        )
        .unwrap();
        assert_eq!(c.eor_updates.len(), 1);
        let eor = &c.eor_updates[0];
        assert_eq!(eor.node, 3);
        assert!(!c.placement.contains(&eor.cell));
        assert_eq!(c.ildr_edges[0].feedback, Feedback::Eor { index: 0 });
        assert_eq!(c.ildr_edges[0].selector_init, 2);
    }

    #[test]
    fn dual_dependency_rejected() {
        let dfg = parse_dfg_text("node 0 add\nback 0 0 0 1\nback 0 0 1 1\nlivein a 0 0 0\nlivein b 0 1 0\nliveout 0\n")
            .unwrap();
        let spec = GridSpec::default();
        let deps = find_deps(&dfg).unwrap();
        let p = place(&dfg, &spec).unwrap();
        assert_eq!(attach_ildr(&dfg, &deps, &p, &spec).unwrap_err(), MapError::UnsupportedDualDependency { node: 0 });
    }

    #[test]
    fn consecutive_deps_stay_baseline() {
        let c = config(
            "node 0 const 1\nnode 1 add\nnode 2 mul\nnode 3 add\nedge 0 1 1\nedge 1 2 0\nedge 2 3 0\nback 3 1 0 1\nback 3 2 1 1\nback 3 3 1 1\nlivein x0 1 0 0\nlivein x1 2 1 2\nlivein x2 3 1 3\nliveout 3\n",
            &GridSpec::default(),
        )
        .unwrap();
        assert!(c.ildr_edges.is_empty());
        assert_eq!(c.baseline_edges, vec![3, 4, 5]);
        assert_eq!(c.spills.len(), 3);
    }

    #[test]
    fn spill_without_ldst_uses_column_zero() {
        let c = config(
            "node 0 const 1\nnode 1 add\nedge 0 1 1\nback 1 1 0 1\nlivein x 1 0 0\nliveout 1\n",
            &GridSpec::row("COMPUTE,COMPUTE,COMPUTE").unwrap(),
        )
        .unwrap();
        assert_eq!(c.spills[0].port, Cell::new(0, 0));
        assert_eq!(c.spills[0].latency, 2);
    }
}
