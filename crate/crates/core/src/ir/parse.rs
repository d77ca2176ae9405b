use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::validate::{validate, Violation};
use super::{DataflowGraph, Edge, EdgeKind, LiveIn, LiveInValues, Node, NodeId, OpKind};
use crate::value::Value;

/// Source position; JSON declarations only carry an element index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loc {
    Line(usize),
    Element { section: &'static str, index: usize },
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Line(l) => write!(f, "line {l}"),
            Loc::Element { section, index } => write!(f, "{section}[{index}]"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{loc}: reference to undefined node {node}")]
    DanglingReference { loc: Loc, node: NodeId },
    #[error("{loc}: node {node} slot {slot} is already bound")]
    DuplicateSlot { loc: Loc, node: NodeId, slot: usize },
    #[error("invalid graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ParseError {
    /// Stable identifier of the error class.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "E-SYNTAX",
            ParseError::DanglingReference { .. } => "E-DANGLING",
            ParseError::DuplicateSlot { .. } => "E-DUPSLOT",
            ParseError::Invalid(_) => "E-INVALID",
            ParseError::Io { .. } => "E-IO",
        }
    }
}

#[derive(Default)]
struct Decls {
    nodes: Vec<(Loc, Node)>,
    edges: Vec<(Loc, Edge)>,
    live_in: Vec<(Loc, LiveIn)>,
    live_out: Vec<(Loc, NodeId)>,
    memory: BTreeMap<i64, Value>,
}

/// Parses either format, picking JSON when `path` ends in `.json`.
pub fn read_dfg(path: &Path) -> Result<DataflowGraph, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io { path: path.to_path_buf(), source })?;
    parse_dfg(&text, path.extension().is_some_and(|e| e == "json"))
}

pub fn parse_dfg(text: &str, json: bool) -> Result<DataflowGraph, ParseError> {
    if json {
        parse_dfg_json(text)
    } else {
        parse_dfg_text(text)
    }
}

pub fn parse_dfg_text(text: &str) -> Result<DataflowGraph, ParseError> {
    finish(text_decls(text)?)
}

pub fn parse_dfg_json(text: &str) -> Result<DataflowGraph, ParseError> {
    finish(json_decls(text)?)
}

fn finish(decls: Decls) -> Result<DataflowGraph, ParseError> {
    check_references(&decls)?;
    let graph = assemble(decls);
    let errors: Vec<Violation> = validate(&graph).into_iter().filter(Violation::is_error).collect();
    if errors.is_empty() {
        Ok(graph)
    } else {
        Err(ParseError::Invalid(errors))
    }
}

/// Text parse without reference or invariant checks, for validator tests.
#[cfg(test)]
pub(crate) fn build_unchecked(text: &str) -> Result<DataflowGraph, ParseError> {
    text_decls(text).map(assemble)
}

fn check_references(decls: &Decls) -> Result<(), ParseError> {
    let ids: BTreeSet<NodeId> = decls.nodes.iter().map(|(_, n)| n.id).collect();
    let mut refs: Vec<(Loc, NodeId)> = Vec::new();
    for (loc, e) in &decls.edges {
        refs.push((*loc, e.src));
        refs.push((*loc, e.dst));
    }
    refs.extend(decls.live_in.iter().map(|(loc, l)| (*loc, l.node)));
    refs.extend(decls.live_out.iter().copied());
    if let Some((loc, node)) = refs.into_iter().find(|(_, id)| !ids.contains(id)) {
        return Err(ParseError::DanglingReference { loc, node });
    }

    // A slot takes one intra edge, or one live-in optionally paired with one
    // back edge.
    #[derive(Default)]
    struct Seen {
        intra: bool,
        back: bool,
        livein: bool,
    }
    let mut seen: BTreeMap<(NodeId, usize), Seen> = BTreeMap::new();
    let mut bindings: Vec<(Loc, NodeId, usize, u8)> =
        decls.edges.iter().map(|(loc, e)| (*loc, e.dst, e.slot, if e.is_back() { 1 } else { 0 })).collect();
    bindings.extend(decls.live_in.iter().map(|(loc, l)| (*loc, l.node, l.slot, 2)));
    bindings.sort_by_key(|(loc, ..)| match loc {
        Loc::Line(l) => (0, *l, 0),
        Loc::Element { section, index } => (1, section_rank(section), *index),
    });
    for (loc, node, slot, what) in bindings {
        let s = seen.entry((node, slot)).or_default();
        let clash = match what {
            0 => s.intra || s.back || s.livein,
            1 => s.intra || s.back,
            _ => s.intra || s.livein,
        };
        if clash {
            return Err(ParseError::DuplicateSlot { loc, node, slot });
        }
        match what {
            0 => s.intra = true,
            1 => s.back = true,
            _ => s.livein = true,
        }
    }
    Ok(())
}

fn section_rank(section: &str) -> usize {
    match section {
        "edge" => 0,
        "back" => 1,
        _ => 2,
    }
}

fn assemble(decls: Decls) -> DataflowGraph {
    let mut nodes: Vec<Node> = decls.nodes.into_iter().map(|(_, n)| n).collect();
    nodes.sort_by_key(|n| n.id);
    let (intra, back): (Vec<Edge>, Vec<Edge>) = decls.edges.into_iter().map(|(_, e)| e).partition(|e| !e.is_back());
    DataflowGraph {
        nodes,
        edges: intra.into_iter().chain(back).collect(),
        live_in: decls.live_in.into_iter().map(|(_, l)| l).collect(),
        live_out: decls.live_out.into_iter().map(|(_, o)| o).collect(),
        memory: decls.memory,
    }
}

struct Tokens<'a> {
    line: usize,
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        let body = text.split('#').next().unwrap_or("");
        let mut items = Vec::new();
        let mut start = None;
        for (i, c) in body.char_indices() {
            match (c.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    items.push((s + 1, &body[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            items.push((s + 1, &body[s..]));
        }
        Tokens { line, items, pos: 0 }
    }

    fn err(&self, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col, msg: msg.into() }
    }

    fn peek_col(&self) -> usize {
        self.items.get(self.pos).map_or_else(|| self.end_col(), |(c, _)| *c)
    }

    fn end_col(&self) -> usize {
        self.items.last().map_or(1, |(c, t)| c + t.len())
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        let item =
            self.items.get(self.pos).copied().ok_or_else(|| self.err(self.end_col(), format!("expected {what}")))?;
        self.pos += 1;
        Ok(item)
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, ParseError> {
        let (col, tok) = self.next(what)?;
        tok.parse().map_err(|_| self.err(col, format!("expected {what}, found {tok:?}")))
    }

    fn value(&mut self, what: &str) -> Result<Value, ParseError> {
        self.number(what)
    }

    fn rest(&mut self) -> Vec<(usize, &'a str)> {
        let r = self.items[self.pos..].to_vec();
        self.pos = self.items.len();
        r
    }

    fn done(&self) -> Result<(), ParseError> {
        match self.items.get(self.pos) {
            None => Ok(()),
            Some((col, tok)) => Err(self.err(*col, format!("unexpected token {tok:?}"))),
        }
    }
}

fn text_decls(text: &str) -> Result<Decls, ParseError> {
    let mut d = Decls::default();
    let mut node_ids = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let loc = Loc::Line(line);
        let mut t = Tokens::new(line, raw);
        if t.items.is_empty() {
            continue;
        }
        let (kw_col, kw) = t.next("keyword")?;
        match kw {
            "node" => {
                let id_col = t.peek_col();
                let id: NodeId = t.number("node id")?;
                let (kind_col, mnemonic) = t.next("operation kind")?;
                let value = if mnemonic == "const" { Some(t.value("constant value")?) } else { None };
                let kind = OpKind::from_mnemonic(mnemonic, value)
                    .ok_or_else(|| t.err(kind_col, format!("unknown operation {mnemonic:?}")))?;
                t.done()?;
                if !node_ids.insert(id) {
                    return Err(t.err(id_col, format!("node {id} declared twice")));
                }
                d.nodes.push((loc, Node { id, kind }));
            }
            "edge" | "back" => {
                let src = t.number("source node")?;
                let dst = t.number("destination node")?;
                let slot = t.number("operand slot")?;
                let kind = if kw == "back" { EdgeKind::Back { diff: t.number("diff")? } } else { EdgeKind::Intra };
                t.done()?;
                d.edges.push((loc, Edge { src, dst, slot, kind }));
            }
            "livein" => {
                let (_, name) = t.next("livein name")?;
                let node = t.number("node id")?;
                let slot = t.number("operand slot")?;
                let rest = t.rest();
                if rest.is_empty() {
                    return Err(t.err(t.end_col(), "expected at least one livein value"));
                }
                let values = if rest.iter().any(|(_, tok)| *tok == "tid") {
                    if rest.len() != 1 {
                        let col = rest.iter().find(|(_, tok)| *tok == "tid").unwrap().0;
                        return Err(t.err(col, "`tid` must be the only livein value"));
                    }
                    LiveInValues::ThreadId
                } else {
                    let mut vs = Vec::with_capacity(rest.len());
                    for (col, tok) in rest {
                        vs.push(tok.parse().map_err(|_| t.err(col, format!("bad value {tok:?}")))?);
                    }
                    LiveInValues::PerThread(vs)
                };
                d.live_in.push((loc, LiveIn { name: name.to_string(), node, slot, values }));
            }
            "liveout" => {
                let node = t.number("node id")?;
                t.done()?;
                d.live_out.push((loc, node));
            }
            "mem" => {
                let addr_col = t.peek_col();
                let addr: i64 = t.number("address")?;
                let value = t.value("memory value")?;
                t.done()?;
                if d.memory.insert(addr, value).is_some() {
                    return Err(t.err(addr_col, format!("address {addr} initialised twice")));
                }
            }
            other => return Err(t.err(kw_col, format!("unknown declaration {other:?}"))),
        }
    }
    Ok(d)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGraph {
    #[serde(default)]
    node: Vec<JsonNode>,
    #[serde(default)]
    edge: Vec<JsonEdge>,
    #[serde(default)]
    back: Vec<JsonBack>,
    #[serde(default)]
    livein: Vec<JsonLiveIn>,
    #[serde(default)]
    liveout: Vec<NodeId>,
    #[serde(default)]
    mem: Vec<JsonMem>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonNode {
    id: NodeId,
    kind: String,
    #[serde(default)]
    value: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonEdge {
    src: NodeId,
    dst: NodeId,
    slot: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonBack {
    src: NodeId,
    dst: NodeId,
    slot: usize,
    diff: u32,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonLiveInValues {
    Values(Vec<Value>),
    Tid(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonLiveIn {
    name: String,
    node: NodeId,
    slot: usize,
    values: JsonLiveInValues,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonMem {
    addr: i64,
    value: Value,
}

fn json_decls(text: &str) -> Result<Decls, ParseError> {
    let g: JsonGraph = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        col: e.column(),
        msg: e.to_string(),
    })?;
    let semantic = |msg: String| ParseError::Syntax { line: 0, col: 0, msg };
    let mut d = Decls::default();
    let mut ids = BTreeSet::new();
    for (index, n) in g.node.into_iter().enumerate() {
        let kind = OpKind::from_mnemonic(&n.kind, n.value)
            .ok_or_else(|| semantic(format!("node[{index}]: bad kind {:?} or missing const value", n.kind)))?;
        if !matches!(kind, OpKind::Const(_)) && n.value.is_some() {
            return Err(semantic(format!("node[{index}]: only const nodes take a value")));
        }
        if !ids.insert(n.id) {
            return Err(semantic(format!("node[{index}]: node {} declared twice", n.id)));
        }
        d.nodes.push((Loc::Element { section: "node", index }, Node { id: n.id, kind }));
    }
    for (index, e) in g.edge.into_iter().enumerate() {
        let edge = Edge { src: e.src, dst: e.dst, slot: e.slot, kind: EdgeKind::Intra };
        d.edges.push((Loc::Element { section: "edge", index }, edge));
    }
    for (index, e) in g.back.into_iter().enumerate() {
        let edge = Edge { src: e.src, dst: e.dst, slot: e.slot, kind: EdgeKind::Back { diff: e.diff } };
        d.edges.push((Loc::Element { section: "back", index }, edge));
    }
    for (index, l) in g.livein.into_iter().enumerate() {
        let values = match l.values {
            JsonLiveInValues::Values(vs) => LiveInValues::PerThread(vs),
            JsonLiveInValues::Tid(s) if s == "tid" => LiveInValues::ThreadId,
            JsonLiveInValues::Tid(s) => return Err(semantic(format!("livein[{index}]: unknown value source {s:?}"))),
        };
        let live_in = LiveIn { name: l.name, node: l.node, slot: l.slot, values };
        d.live_in.push((Loc::Element { section: "livein", index }, live_in));
    }
    for (index, o) in g.liveout.into_iter().enumerate() {
        d.live_out.push((Loc::Element { section: "liveout", index }, o));
    }
    for (index, m) in g.mem.into_iter().enumerate() {
        if d.memory.insert(m.addr, m.value).is_some() {
            return Err(semantic(format!("mem[{index}]: address {} initialised twice", m.addr)));
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_parses() {
        let g = parse_dfg_text(
            "# x += 1\nnode 0 const 1\nnode 1 add\nnode 2 sink\nedge 0 1 1\nedge 1 2 0\nback 1 1 0 1\nlivein x 1 0 0\nliveout 1\n",
        )
        .unwrap();
        assert_eq!(g.nodes.len(), 3);
        let backs: Vec<_> = g.back_edges().collect();
        assert_eq!(backs.len(), 1);
        assert_eq!(backs[0].1.diff(), Some(1));
    }

    #[test]
    fn undefined_node_is_dangling() {
        let err = parse_dfg_text("node 0 const 1\nnode 1 sink\nedge 99 1 0\n").unwrap_err();
        assert!(matches!(err, ParseError::DanglingReference { node: 99, loc: Loc::Line(3) }));
        assert_eq!(err.code(), "E-DANGLING");
    }

    #[test]
    fn duplicate_binding_reports_second_line() {
        let src = "node 0 const 1\nnode 1 sink\nedge 0 1 0\nlivein v 1 0 3\n";
        let err = parse_dfg_text(src).unwrap_err();
        assert!(matches!(err, ParseError::DuplicateSlot { node: 1, slot: 0, loc: Loc::Line(4) }));
        assert_eq!(err.code(), "E-DUPSLOT");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_dfg_text("node 0 const 1\nnode 1 frobnicate\n").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 8)),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_dfg_text("edge 0 1\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 1, .. }));
        assert_eq!(err.code(), "E-SYNTAX");
        assert!(matches!(parse_dfg_text("livein x 0 0 1 tid\n").unwrap_err(), ParseError::Syntax { col: 16, .. }));
    }

    #[test]
    fn invalid_graph_is_rejected_with_violations() {
        let err = parse_dfg_text("node 0 add\nnode 1 add\nedge 0 1 0\nedge 1 0 0\nlivein a 0 1 1\nlivein b 1 1 1\n")
            .unwrap_err();
        assert_eq!(err.code(), "E-INVALID");
    }

    #[test]
    fn json_matches_text() {
        let text = "node 0 load\nnode 1 add\nedge 0 1 1\nback 1 1 0 1\nlivein i 0 0 tid\nlivein x 1 0 0\nliveout 1\nmem 0 5\nmem 1 7.5\n";
        let json = r#"{
            "node": [{"id": 0, "kind": "load"}, {"id": 1, "kind": "add"}],
            "edge": [{"src": 0, "dst": 1, "slot": 1}],
            "back": [{"src": 1, "dst": 1, "slot": 0, "diff": 1}],
            "livein": [{"name": "i", "node": 0, "slot": 0, "values": "tid"},
                       {"name": "x", "node": 1, "slot": 0, "values": [0]}],
            "liveout": [1],
            "mem": [{"addr": 0, "value": 5}, {"addr": 1, "value": 7.5}]
        }"#;
        assert_eq!(parse_dfg_text(text).unwrap(), parse_dfg_json(json).unwrap());
    }

    #[test]
    fn json_dangling_reports_element() {
        let json = r#"{"node": [{"id": 0, "kind": "sink"}], "edge": [{"src": 4, "dst": 0, "slot": 0}]}"#;
        let err = parse_dfg_json(json).unwrap_err();
        assert!(matches!(
            err,
            ParseError::DanglingReference { node: 4, loc: Loc::Element { section: "edge", index: 0 } }
        ));
    }
}
