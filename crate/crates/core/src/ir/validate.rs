use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{DataflowGraph, LiveInValues, NodeId, OpKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    /// Legal IR the grid cannot resolve in hardware; see `attach_ildr`.
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ViolationKind {
    NonDenseIds { position: usize, id: NodeId },
    DanglingReference { node: NodeId },
    SlotOutOfRange { node: NodeId, slot: usize },
    DuplicateSlot { node: NodeId, slot: usize },
    UnfedSlot { node: NodeId, slot: usize },
    IntraCycle { nodes: Vec<NodeId> },
    SinkHasOutput { node: NodeId },
    ZeroDiff { edge: usize },
    BackEdgeWithoutLiveIn { node: NodeId, slot: usize },
    ShortLiveIn { node: NodeId, slot: usize, needed: u32, got: usize },
    EmptyLiveIn { name: String },
    DuplicateLiveInName { name: String },
    MultiDependentInput { node: NodeId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl Violation {
    fn error(kind: ViolationKind) -> Self {
        Violation { severity: Severity::Error, kind }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ViolationKind::*;
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: ")?;
        match &self.kind {
            NonDenseIds { position, id } => {
                write!(f, "node ids must be dense: position {position} holds id {id}")
            }
            DanglingReference { node } => write!(f, "reference to undefined node {node}"),
            SlotOutOfRange { node, slot } => write!(f, "node {node} has no operand slot {slot}"),
            DuplicateSlot { node, slot } => write!(f, "node {node} slot {slot} bound twice"),
            UnfedSlot { node, slot } => write!(f, "node {node} slot {slot} has no source"),
            IntraCycle { nodes } => write!(f, "intra-iteration edges form a cycle through {nodes:?}"),
            SinkHasOutput { node } => write!(f, "sink node {node} used as an edge source"),
            ZeroDiff { edge } => write!(f, "back edge #{edge} has diff 0"),
            BackEdgeWithoutLiveIn { node, slot } => {
                write!(f, "back edge into node {node} slot {slot} lacks a livein for early threads")
            }
            ShortLiveIn { node, slot, needed, got } => {
                write!(f, "livein on node {node} slot {slot} provides {got} values, diff needs {needed}")
            }
            EmptyLiveIn { name } => write!(f, "livein {name} has no values"),
            DuplicateLiveInName { name } => write!(f, "livein {name} declared twice"),
            MultiDependentInput { node } => {
                write!(f, "node {node} has two loop-carried inputs; the grid resolves one")
            }
        }
    }
}

/// Checks every structural invariant of the IR. Empty iff the graph is valid;
/// warnings alone do not make it invalid.
pub fn validate(dfg: &DataflowGraph) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    let n = dfg.nodes.len();

    for (pos, node) in dfg.nodes.iter().enumerate() {
        if node.id != pos {
            out.push(Violation::error(NonDenseIds { position: pos, id: node.id }));
        }
    }

    #[derive(Default)]
    struct Binding {
        intra: usize,
        back: usize,
        livein: usize,
        diff: u32,
    }
    let mut bindings: BTreeMap<(NodeId, usize), Binding> = BTreeMap::new();
    let mut dangling = BTreeSet::new();

    for (i, e) in dfg.edges.iter().enumerate() {
        for end in [e.src, e.dst] {
            if end >= n {
                dangling.insert(end);
            }
        }
        if e.src >= n || e.dst >= n {
            continue;
        }
        if !dfg.nodes[e.src].kind.has_output() {
            out.push(Violation::error(SinkHasOutput { node: e.src }));
        }
        if e.slot >= dfg.nodes[e.dst].kind.arity() {
            out.push(Violation::error(SlotOutOfRange { node: e.dst, slot: e.slot }));
            continue;
        }
        let b = bindings.entry((e.dst, e.slot)).or_default();
        match e.diff() {
            None => b.intra += 1,
            Some(d) => {
                if d == 0 {
                    out.push(Violation::error(ZeroDiff { edge: i }));
                }
                b.back += 1;
                b.diff = b.diff.max(d);
            }
        }
    }

    let mut names = BTreeSet::new();
    let mut livein_len: BTreeMap<(NodeId, usize), Option<usize>> = BTreeMap::new();
    for l in &dfg.live_in {
        if !names.insert(l.name.as_str()) {
            out.push(Violation::error(DuplicateLiveInName { name: l.name.clone() }));
        }
        if let LiveInValues::PerThread(vs) = &l.values {
            if vs.is_empty() {
                out.push(Violation::error(EmptyLiveIn { name: l.name.clone() }));
            }
        }
        if l.node >= n {
            dangling.insert(l.node);
            continue;
        }
        if l.slot >= dfg.nodes[l.node].kind.arity() {
            out.push(Violation::error(SlotOutOfRange { node: l.node, slot: l.slot }));
            continue;
        }
        bindings.entry((l.node, l.slot)).or_default().livein += 1;
        livein_len.insert(
            (l.node, l.slot),
            match &l.values {
                LiveInValues::PerThread(vs) => Some(vs.len()),
                LiveInValues::ThreadId => None,
            },
        );
    }

    for &o in &dfg.live_out {
        if o >= n {
            dangling.insert(o);
        }
    }
    for node in dangling {
        out.push(Violation::error(DanglingReference { node }));
    }

    for node in &dfg.nodes {
        if node.id >= n {
            continue;
        }
        for slot in 0..node.kind.arity() {
            let Some(b) = bindings.get(&(node.id, slot)) else {
                out.push(Violation::error(UnfedSlot { node: node.id, slot }));
                continue;
            };
            let total = b.intra + b.back + b.livein;
            if b.intra > 1 || b.back > 1 || b.livein > 1 || (b.intra == 1 && total > 1) {
                out.push(Violation::error(DuplicateSlot { node: node.id, slot }));
            } else if b.back == 1 && b.livein == 0 {
                out.push(Violation::error(BackEdgeWithoutLiveIn { node: node.id, slot }));
            } else if b.back == 1 {
                if let Some(Some(got)) = livein_len.get(&(node.id, slot)) {
                    if (*got as u64) < b.diff as u64 {
                        out.push(Violation::error(ShortLiveIn { node: node.id, slot, needed: b.diff, got: *got }));
                    }
                }
            }
        }
        let dependent_slots =
            (0..node.kind.arity()).filter(|&s| bindings.get(&(node.id, s)).is_some_and(|b| b.back > 0)).count();
        if dependent_slots > 1 {
            out.push(Violation { severity: Severity::Warning, kind: MultiDependentInput { node: node.id } });
        }
    }

    if out.iter().all(|v| !matches!(v.kind, NonDenseIds { .. } | DanglingReference { .. })) {
        if let Some(cycle) = intra_cycle_nodes(dfg) {
            out.push(Violation::error(IntraCycle { nodes: cycle }));
        }
    }

    // Const nodes take no operands; anything bound to them was reported as
    // an out-of-range slot above.
    debug_assert!(dfg.nodes.iter().filter(|nd| matches!(nd.kind, OpKind::Const(_))).all(|nd| nd.kind.arity() == 0));

    out
}

/// Nodes lying on an intra-edge cycle, or `None` if the intra edges are a DAG.
fn intra_cycle_nodes(dfg: &DataflowGraph) -> Option<Vec<NodeId>> {
    if dfg.topo_order().is_some() {
        return None;
    }
    // Peel sources and sinks until only cycle members and nodes squeezed
    // between cycles remain, then keep the ones that reach themselves.
    let succ = dfg.intra_successors();
    let n = dfg.nodes.len();
    let reaches_self = |start: NodeId| {
        let mut seen = vec![false; n];
        let mut stack: Vec<NodeId> = succ[start].clone();
        while let Some(v) = stack.pop() {
            if v == start {
                return true;
            }
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend(succ[v].iter().copied());
            }
        }
        false
    };
    Some((0..n).filter(|&v| reaches_self(v)).collect())
}
