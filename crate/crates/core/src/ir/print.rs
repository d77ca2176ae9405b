use std::fmt::Write as _;

use serde_json::{json, Value as Json};

use super::{DataflowGraph, EdgeKind, LiveInValues, OpKind};

/// Canonical text form; `parse_dfg_text(&print_dfg(g)) == g` for valid `g`.
pub fn print_dfg(g: &DataflowGraph) -> String {
    let mut s = String::new();
    for n in &g.nodes {
        writeln!(s, "node {} {}", n.id, n.kind).unwrap();
    }
    for e in &g.edges {
        match e.kind {
            EdgeKind::Intra => writeln!(s, "edge {} {} {}", e.src, e.dst, e.slot),
            EdgeKind::Back { diff } => writeln!(s, "back {} {} {} {}", e.src, e.dst, e.slot, diff),
        }
        .unwrap();
    }
    for l in &g.live_in {
        write!(s, "livein {} {} {}", l.name, l.node, l.slot).unwrap();
        match &l.values {
            LiveInValues::ThreadId => s.push_str(" tid"),
            LiveInValues::PerThread(vs) => vs.iter().for_each(|v| write!(s, " {v}").unwrap()),
        }
        s.push('\n');
    }
    for o in &g.live_out {
        writeln!(s, "liveout {o}").unwrap();
    }
    for (addr, v) in &g.memory {
        writeln!(s, "mem {addr} {v}").unwrap();
    }
    s
}

/// JSON encoding using the text format's keywords as field names.
pub fn to_json(g: &DataflowGraph) -> Json {
    let nodes: Vec<Json> = g
        .nodes
        .iter()
        .map(|n| match n.kind {
            OpKind::Const(v) => json!({"id": n.id, "kind": "const", "value": v}),
            k => json!({"id": n.id, "kind": k.mnemonic()}),
        })
        .collect();
    let edges: Vec<Json> = g.intra_edges().map(|(_, e)| json!({"src": e.src, "dst": e.dst, "slot": e.slot})).collect();
    let backs: Vec<Json> =
        g.back_edges().map(|(_, e)| json!({"src": e.src, "dst": e.dst, "slot": e.slot, "diff": e.diff()})).collect();
    let liveins: Vec<Json> = g
        .live_in
        .iter()
        .map(|l| {
            let values = match &l.values {
                LiveInValues::ThreadId => json!("tid"),
                LiveInValues::PerThread(vs) => json!(vs),
            };
            json!({"name": l.name, "node": l.node, "slot": l.slot, "values": values})
        })
        .collect();
    let mem: Vec<Json> = g.memory.iter().map(|(a, v)| json!({"addr": a, "value": v})).collect();
    json!({
        "node": nodes,
        "edge": edges,
        "back": backs,
        "livein": liveins,
        "liveout": g.live_out,
        "mem": mem,
    })
}
