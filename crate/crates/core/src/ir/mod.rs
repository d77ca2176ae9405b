//! Loop dataflow IR: one loop body as a graph, one thread per iteration.
//!
//! Nodes carry a single operation with at most two operand slots. Intra
//! edges connect producers and consumers within one iteration and must form
//! a DAG; back edges carry a value from iteration `t` to iteration
//! `t + diff`. Threads `t < diff` read the dependent slot from a live-in.

mod interp;
mod parse;
mod print;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::value::Value;

pub use interp::{reference_execute, ExecError, ThreadOutputs};
pub use parse::{parse_dfg, parse_dfg_json, parse_dfg_text, read_dfg, ParseError};
pub use print::{print_dfg, to_json};
pub use validate::{validate, Severity, Violation, ViolationKind};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    Cmp,
    And,
    Or,
    Shift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FpuOp {
    Fadd,
    Fmul,
    Fdiv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Alu(AluOp),
    Fpu(FpuOp),
    /// slot 0: address.
    Load,
    /// slot 0: address, slot 1: value. Emits the stored value.
    Store,
    /// Predicated pass: slot 0 predicate, slot 1 value; zero when the
    /// predicate is zero.
    Control,
    /// Ordering join: emits slot 0 once slot 1 (an ordering token) arrived.
    SplitJoin,
    Const(Value),
    Sink,
}

/// Key into the unit latency table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyClass {
    Alu,
    Fpu,
    Load,
    Store,
    Control,
    SplitJoin,
}

impl OpKind {
    pub fn arity(&self) -> usize {
        match self {
            OpKind::Alu(_) | OpKind::Fpu(_) => 2,
            OpKind::Load => 1,
            OpKind::Store | OpKind::Control | OpKind::SplitJoin => 2,
            OpKind::Const(_) => 0,
            OpKind::Sink => 1,
        }
    }

    pub fn has_output(&self) -> bool {
        !matches!(self, OpKind::Sink)
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, OpKind::Load | OpKind::Store)
    }

    pub fn latency_class(&self) -> LatencyClass {
        match self {
            OpKind::Alu(_) | OpKind::Const(_) | OpKind::Sink => LatencyClass::Alu,
            OpKind::Fpu(_) => LatencyClass::Fpu,
            OpKind::Load => LatencyClass::Load,
            OpKind::Store => LatencyClass::Store,
            OpKind::Control => LatencyClass::Control,
            OpKind::SplitJoin => LatencyClass::SplitJoin,
        }
    }

    /// Keyword used by the text format.
    pub fn mnemonic(&self) -> &'static str {
        match self {
            OpKind::Alu(op) => match op {
                AluOp::Add => "add",
                AluOp::Sub => "sub",
                AluOp::Mul => "mul",
                AluOp::Cmp => "cmp",
                AluOp::And => "and",
                AluOp::Or => "or",
                AluOp::Shift => "shift",
            },
            OpKind::Fpu(op) => match op {
                FpuOp::Fadd => "fadd",
                FpuOp::Fmul => "fmul",
                FpuOp::Fdiv => "fdiv",
            },
            OpKind::Load => "load",
            OpKind::Store => "store",
            OpKind::Control => "control",
            OpKind::SplitJoin => "splitjoin",
            OpKind::Const(_) => "const",
            OpKind::Sink => "sink",
        }
    }

    /// Parses a mnemonic; `const` needs its value supplied separately.
    pub fn from_mnemonic(s: &str, const_value: Option<Value>) -> Option<OpKind> {
        Some(match s {
            "add" => OpKind::Alu(AluOp::Add),
            "sub" => OpKind::Alu(AluOp::Sub),
            "mul" => OpKind::Alu(AluOp::Mul),
            "cmp" => OpKind::Alu(AluOp::Cmp),
            "and" => OpKind::Alu(AluOp::And),
            "or" => OpKind::Alu(AluOp::Or),
            "shift" => OpKind::Alu(AluOp::Shift),
            "fadd" => OpKind::Fpu(FpuOp::Fadd),
            "fmul" => OpKind::Fpu(FpuOp::Fmul),
            "fdiv" => OpKind::Fpu(FpuOp::Fdiv),
            "load" => OpKind::Load,
            "store" => OpKind::Store,
            "control" => OpKind::Control,
            "splitjoin" => OpKind::SplitJoin,
            "const" => OpKind::Const(const_value?),
            "sink" => OpKind::Sink,
            _ => return None,
        })
    }

    /// Pure evaluation for everything except memory operations.
    ///
    /// `inputs` has exactly `arity()` entries.
    pub fn eval(&self, inputs: &[Value]) -> Value {
        match *self {
            OpKind::Alu(op) => {
                let (a, b) = (inputs[0].as_i64(), inputs[1].as_i64());
                Value::Int(match op {
                    AluOp::Add => a.wrapping_add(b),
                    AluOp::Sub => a.wrapping_sub(b),
                    AluOp::Mul => a.wrapping_mul(b),
                    AluOp::Cmp => a.cmp(&b) as i64,
                    AluOp::And => a & b,
                    AluOp::Or => a | b,
                    AluOp::Shift => a.wrapping_shl((b & 63) as u32),
                })
            }
            OpKind::Fpu(op) => {
                let (a, b) = (inputs[0].as_f64(), inputs[1].as_f64());
                Value::Float(match op {
                    FpuOp::Fadd => a + b,
                    FpuOp::Fmul => a * b,
                    FpuOp::Fdiv => a / b,
                })
            }
            OpKind::Control => {
                if inputs[0].is_zero() {
                    inputs[1].zero_like()
                } else {
                    inputs[1]
                }
            }
            OpKind::SplitJoin | OpKind::Sink => inputs[0],
            OpKind::Store => inputs[1],
            OpKind::Const(v) => v,
            OpKind::Load => unreachable!("loads are evaluated against memory"),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::Const(v) => write!(f, "const {v}"),
            other => f.write_str(other.mnemonic()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: OpKind,
}

impl Node {
    pub fn n_inputs(&self) -> usize {
        self.kind.arity()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Intra,
    Back { diff: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub slot: usize,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_back(&self) -> bool {
        matches!(self.kind, EdgeKind::Back { .. })
    }

    pub fn diff(&self) -> Option<u32> {
        match self.kind {
            EdgeKind::Back { diff } => Some(diff),
            EdgeKind::Intra => None,
        }
    }
}

/// Initial values bound to an operand slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LiveInValues {
    /// One value per thread. A single value on a slot without a back edge is
    /// broadcast to every thread.
    PerThread(Vec<Value>),
    /// Each thread receives its own thread id.
    ThreadId,
}

impl LiveInValues {
    /// Value for `thread`, or `None` when the binding does not cover it.
    pub fn value_for(&self, thread: u32, broadcast: bool) -> Option<Value> {
        match self {
            LiveInValues::ThreadId => Some(Value::Int(thread as i64)),
            LiveInValues::PerThread(vs) if broadcast && vs.len() == 1 => Some(vs[0]),
            LiveInValues::PerThread(vs) => vs.get(thread as usize).copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiveIn {
    pub name: String,
    pub node: NodeId,
    pub slot: usize,
    pub values: LiveInValues,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DataflowGraph {
    pub nodes: Vec<Node>,
    /// Intra and back edges in declaration order.
    pub edges: Vec<Edge>,
    pub live_in: Vec<LiveIn>,
    pub live_out: Vec<NodeId>,
    pub memory: BTreeMap<i64, Value>,
}

/// What feeds one operand slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotSource<'a> {
    Intra(&'a Edge),
    /// Back edge plus the live-in serving threads `t < diff`.
    Back(&'a Edge, &'a LiveIn),
    LiveIn(&'a LiveIn),
}

impl DataflowGraph {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn intra_edges(&self) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(|(_, e)| !e.is_back())
    }

    pub fn back_edges(&self) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(|(_, e)| e.is_back())
    }

    pub fn has_memory_ops(&self) -> bool {
        self.nodes.iter().any(|n| n.kind.is_memory())
    }

    /// Successor lists over intra edges, sorted and deduplicated.
    pub fn intra_successors(&self) -> Vec<Vec<NodeId>> {
        let mut succ = vec![Vec::new(); self.nodes.len()];
        for (_, e) in self.intra_edges() {
            if e.src < self.nodes.len() && e.dst < self.nodes.len() {
                succ[e.src].push(e.dst);
            }
        }
        for s in &mut succ {
            s.sort_unstable();
            s.dedup();
        }
        succ
    }

    /// Kahn order over intra edges, smallest ready id first. `None` when the
    /// intra edges contain a cycle.
    pub fn topo_order(&self) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for (_, e) in self.intra_edges() {
            succ[e.src].push(e.dst);
            indeg[e.dst] += 1;
        }
        let mut ready: std::collections::BTreeSet<NodeId> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &w in &succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Resolves the source of each slot of `node`. Assumes a valid graph.
    pub fn slot_sources(&self, node: NodeId) -> Vec<Option<SlotSource<'_>>> {
        let arity = self.nodes[node].kind.arity();
        let mut out = vec![None; arity];
        for e in self.edges.iter().filter(|e| e.dst == node && e.slot < arity) {
            out[e.slot] = match e.kind {
                EdgeKind::Intra => Some(SlotSource::Intra(e)),
                EdgeKind::Back { .. } => {
                    self.live_in.iter().find(|l| l.node == node && l.slot == e.slot).map(|l| SlotSource::Back(e, l))
                }
            };
        }
        for l in self.live_in.iter().filter(|l| l.node == node && l.slot < arity) {
            if out[l.slot].is_none() {
                out[l.slot] = Some(SlotSource::LiveIn(l));
            }
        }
        out
    }
}

impl FromStr for DataflowGraph {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_dfg_text(s)
    }
}

impl fmt::Display for DataflowGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_dfg(self))
    }
}
