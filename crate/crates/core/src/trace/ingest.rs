use std::collections::BTreeMap;

use thiserror::Error;

use super::{BbId, RoutineGraph};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: {found} line in a {format} trace")]
    MixedFormats { line: usize, format: &'static str, found: &'static str },
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::Malformed { .. } => "E-TRACE-SYNTAX",
            TraceError::MixedFormats { .. } => "E-TRACE-MIXED",
        }
    }
}

/// Routine graphs keyed by routine name, plus non-fatal findings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ingested {
    pub routines: BTreeMap<String, RoutineGraph>,
    pub warnings: Vec<String>,
}

fn parse_bb(s: &str) -> Option<BbId> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => BbId::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

fn parse_count(s: &str) -> Option<u64> {
    s.trim().parse().ok()
}

/// Reads a streaming or aggregated trace; the format is fixed by whether
/// the first meaningful line is `#aggregated`.
pub fn ingest(text: &str) -> Result<Ingested, TraceError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut out = Ingested::default();
    let Some((_, first)) = lines.clone().next() else { return Ok(out) };
    if first == "#aggregated" {
        lines.next();
        aggregated(lines, &mut out)?;
    } else {
        streaming(lines, &mut out)?;
    }
    for g in out.routines.values() {
        for (bb, n) in g.successor_counts() {
            if n > 2 {
                out.warnings
                    .push(format!("routine {}: block {bb} has {n} successors; blocks end in a single jump", g.name));
            }
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

fn streaming<'a>(lines: impl Iterator<Item = (usize, &'a str)>, out: &mut Ingested) -> Result<(), TraceError> {
    let mut prev: BTreeMap<String, BbId> = BTreeMap::new();
    for (line, text) in lines {
        if text == "#aggregated" || text.starts_with("#bb") {
            return Err(TraceError::MixedFormats { line, format: "streaming", found: "aggregated" });
        }
        if text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        let bad = |msg: &str| TraceError::Malformed { line, msg: msg.to_string() };
        if fields.len() == 4 {
            return Err(TraceError::MixedFormats { line, format: "streaming", found: "edge-count" });
        }
        if !(2..=3).contains(&fields.len()) {
            return Err(bad("expected `<routine>,<bb>[,<instr_count>]`"));
        }
        let routine = fields[0].trim();
        if routine.is_empty() {
            return Err(bad("empty routine name"));
        }
        let bb = parse_bb(fields[1]).ok_or_else(|| bad("bad basic block id"))?;
        let instrs = match fields.get(2) {
            Some(f) => Some(parse_count(f).ok_or_else(|| bad("bad instruction count"))?),
            None => None,
        };
        let g = out.routines.entry(routine.to_string()).or_insert_with(|| RoutineGraph::new(routine));
        let block = g.blocks.entry(bb).or_default();
        block.execs += 1;
        if let Some(n) = instrs {
            if block.instrs.is_some_and(|old| old != n) {
                return Err(bad("instruction count differs from an earlier event for this block"));
            }
            block.instrs = Some(n);
        }
        if let Some(p) = prev.insert(routine.to_string(), bb) {
            *g.edges.entry((p, bb)).or_default() += 1;
        }
    }
    Ok(())
}

fn aggregated<'a>(lines: impl Iterator<Item = (usize, &'a str)>, out: &mut Ingested) -> Result<(), TraceError> {
    let mut declared_execs: BTreeMap<(String, BbId), u64> = BTreeMap::new();
    for (line, text) in lines {
        let bad = |msg: &str| TraceError::Malformed { line, msg: msg.to_string() };
        if text == "#aggregated" {
            return Err(bad("duplicate #aggregated header"));
        }
        if let Some(rest) = text.strip_prefix("#bb") {
            let fields: Vec<&str> = rest.trim().split(',').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(bad("expected `#bb <routine>,<bb>,<instr_count>[,<exec_count>]`"));
            }
            let routine = fields[0].trim();
            let bb = parse_bb(fields[1]).ok_or_else(|| bad("bad basic block id"))?;
            let instrs = parse_count(fields[2]).ok_or_else(|| bad("bad instruction count"))?;
            let g = out.routines.entry(routine.to_string()).or_insert_with(|| RoutineGraph::new(routine));
            let block = g.blocks.entry(bb).or_default();
            if block.instrs.is_some() {
                return Err(bad("block declared twice"));
            }
            block.instrs = Some(instrs);
            if let Some(e) = fields.get(3) {
                let e = parse_count(e).ok_or_else(|| bad("bad execution count"))?;
                declared_execs.insert((routine.to_string(), bb), e);
            }
            continue;
        }
        if text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 4 {
            return Err(TraceError::MixedFormats { line, format: "aggregated", found: "streaming" });
        }
        let routine = fields[0].trim();
        if routine.is_empty() {
            return Err(bad("empty routine name"));
        }
        let src = parse_bb(fields[1]).ok_or_else(|| bad("bad source block id"))?;
        let dst = parse_bb(fields[2]).ok_or_else(|| bad("bad destination block id"))?;
        let count = parse_count(fields[3]).filter(|&c| c >= 1).ok_or_else(|| bad("edge count must be >= 1"))?;
        let g = out.routines.entry(routine.to_string()).or_insert_with(|| RoutineGraph::new(routine));
        g.blocks.entry(src).or_default();
        g.blocks.entry(dst).or_default();
        *g.edges.entry((src, dst)).or_default() += count;
    }
    // Without an explicit count a block ran as often as control entered or
    // left it, whichever is larger.
    for g in out.routines.values_mut() {
        let mut inflow: BTreeMap<BbId, u64> = BTreeMap::new();
        let mut outflow: BTreeMap<BbId, u64> = BTreeMap::new();
        for (&(s, d), &c) in &g.edges {
            *outflow.entry(s).or_default() += c;
            *inflow.entry(d).or_default() += c;
        }
        for (&bb, block) in g.blocks.iter_mut() {
            block.execs = match declared_execs.get(&(g.name.clone(), bb)) {
                Some(&e) => e,
                None => inflow.get(&bb).copied().unwrap_or(0).max(outflow.get(&bb).copied().unwrap_or(0)),
            };
        }
    }
    Ok(())
}
