use std::collections::{BTreeMap, VecDeque};

use super::token::{retag_within, Token, TokenBuffer};
use super::trace::{EventKind, TraceEvent};
use super::{MachineParams, Mode, SimError, SimReport, UnitReport};
use crate::grid::{Cell, Feedback, GridConfig};
use crate::ir::{validate, DataflowGraph, LiveInValues, NodeId, OpKind, Violation};
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TargetKind {
    Plain,
    /// Retagged by an ILDR; drops are counted.
    Ildr,
    /// Re-injected after a spill; drops are silent.
    Spill,
}

#[derive(Clone, Copy, Debug)]
struct Target {
    unit: usize,
    slot: usize,
    latency: u32,
    retag: u32,
    kind: TargetKind,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Node(OpKind),
    /// End-of-route update: forwards its single operand.
    Eor,
}

#[derive(Clone, Copy, Debug)]
struct InFlight {
    done_at: u64,
    tok: Token,
    mem: bool,
}

struct Unit {
    label: String,
    cell: Cell,
    node: Option<NodeId>,
    op: Op,
    latency: u32,
    slots: Vec<TokenBuffer>,
    pipeline: VecDeque<InFlight>,
    held: Option<Token>,
    next_const: u32,
    completed: u32,
    stalls: u64,
    issues: Vec<u64>,
}

struct Stream {
    unit: usize,
    slot: usize,
    next: u32,
    end: u32,
    values: LiveInValues,
    /// Diff of the back edge sharing this slot.
    dependent: Option<u32>,
}

struct Delivery {
    unit: usize,
    slot: usize,
    tok: Token,
}

struct Machine {
    n: u32,
    units: Vec<Unit>,
    targets: Vec<Vec<Target>>,
    streams: Vec<Stream>,
    deliveries: BTreeMap<u64, Vec<Delivery>>,
    memory: BTreeMap<i64, Value>,
    pending_stores: Vec<(i64, Value)>,
    /// Per address: highest thread that loaded, highest that stored.
    mem_seen: BTreeMap<i64, (Option<u32>, Option<u32>)>,
    outstanding: u32,
    mem_cap: u32,
    live_out: BTreeMap<NodeId, Vec<Option<Value>>>,
    dropped_retags: u64,
    selector_discards: u64,
    mem_order_violations: u64,
    trace: Option<Vec<TraceEvent>>,
}

pub(super) fn run(
    config: &GridConfig,
    dfg: &DataflowGraph,
    params: &MachineParams,
    traced: bool,
) -> Result<(SimReport, Vec<TraceEvent>), SimError> {
    params.check()?;
    let errors: Vec<Violation> = validate(dfg).into_iter().filter(Violation::is_error).collect();
    if !errors.is_empty() {
        return Err(SimError::InvalidGraph(errors));
    }
    let mut m = Machine::build(config, dfg, params, traced)?;
    let threshold = m.deadlock_threshold(params);

    let mut cycle = 0u64;
    let mut last_completion = 0u64;
    let mut idle = 0u64;
    loop {
        let mut progress = m.land(cycle);
        progress |= m.inject();
        if let Some(c) = m.complete(cycle) {
            last_completion = c;
            progress = true;
        }
        progress |= m.fire(cycle)?;
        m.apply_stores();

        if m.done() {
            break;
        }
        idle = if progress { 0 } else { idle + 1 };
        if idle > threshold {
            return Err(SimError::Deadlock { cycle, detail: m.describe_blockage() });
        }
        cycle += 1;
    }
    Ok(m.report(params.mode, last_completion))
}

impl Machine {
    fn build(
        config: &GridConfig,
        dfg: &DataflowGraph,
        params: &MachineParams,
        traced: bool,
    ) -> Result<Machine, SimError> {
        let n_nodes = dfg.nodes.len();
        if config.placement.len() != n_nodes {
            return Err(SimError::ConfigMismatch(format!(
                "{} placed cells for {} nodes",
                config.placement.len(),
                n_nodes
            )));
        }
        let spec = &config.spec;
        let depth = spec.token_buffer_depth;
        let mut units: Vec<Unit> = dfg
            .nodes
            .iter()
            .map(|nd| Unit {
                label: format!("n{}:{}", nd.id, nd.kind.mnemonic()),
                cell: config.placement[nd.id],
                node: Some(nd.id),
                op: Op::Node(nd.kind),
                latency: spec.latencies.of(&nd.kind, params.mem_latency),
                slots: (0..nd.kind.arity()).map(|_| TokenBuffer::new(depth)).collect(),
                pipeline: VecDeque::new(),
                held: None,
                next_const: 0,
                completed: 0,
                stalls: 0,
                issues: Vec::with_capacity(params.n_threads as usize),
            })
            .collect();
        let mut targets: Vec<Vec<Target>> = vec![Vec::new(); n_nodes];

        for r in &config.routes {
            targets[r.src].push(Target {
                unit: r.dst,
                slot: r.slot,
                latency: r.latency,
                retag: 0,
                kind: TargetKind::Plain,
            });
        }

        let mut dependent: BTreeMap<(NodeId, usize), u32> = BTreeMap::new();
        for (edge, e) in dfg.back_edges() {
            let diff = e.diff().unwrap();
            dependent.insert((e.dst, e.slot), diff);
            let ildr = match params.mode {
                Mode::Dr if !config.baseline_edges.contains(&edge) => config.ildr_edges.iter().find(|i| i.edge == edge),
                _ => None,
            };
            match ildr.map(|i| i.feedback) {
                Some(Feedback::Local) => targets[e.src].push(Target {
                    unit: e.dst,
                    slot: e.slot,
                    latency: 1,
                    retag: diff,
                    kind: TargetKind::Ildr,
                }),
                Some(Feedback::Eor { index }) => {
                    let eor = config
                        .eor_updates
                        .get(index)
                        .ok_or_else(|| SimError::ConfigMismatch(format!("missing update node #{index}")))?;
                    let u = units.len();
                    units.push(Unit {
                        label: format!("eor{index}"),
                        cell: eor.cell,
                        node: None,
                        op: Op::Eor,
                        latency: spec.latencies.alu,
                        slots: vec![TokenBuffer::new(depth)],
                        pipeline: VecDeque::new(),
                        held: None,
                        next_const: 0,
                        completed: 0,
                        stalls: 0,
                        issues: Vec::with_capacity(params.n_threads as usize),
                    });
                    targets[e.src].push(Target {
                        unit: u,
                        slot: 0,
                        latency: eor.in_latency,
                        retag: 0,
                        kind: TargetKind::Plain,
                    });
                    targets.push(vec![Target {
                        unit: e.dst,
                        slot: e.slot,
                        latency: eor.out_latency,
                        retag: diff,
                        kind: TargetKind::Ildr,
                    }]);
                }
                None => {
                    let spill = config
                        .spill(edge)
                        .ok_or_else(|| SimError::ConfigMismatch(format!("back edge #{edge} has no spill route")))?;
                    targets[e.src].push(Target {
                        unit: e.dst,
                        slot: e.slot,
                        latency: spill.latency + params.spill_latency,
                        retag: diff,
                        kind: TargetKind::Spill,
                    });
                }
            }
        }

        let n = params.n_threads;
        let mut streams = Vec::new();
        for l in &dfg.live_in {
            let dep = dependent.get(&(l.node, l.slot)).copied();
            let end = match (&l.values, dep) {
                (LiveInValues::ThreadId, Some(d)) => d.min(n),
                (LiveInValues::PerThread(vs), Some(_)) => (vs.len() as u32).min(n),
                (_, None) => n,
            };
            let covered = match dep {
                Some(d) => d.min(n),
                None => n,
            };
            if let Some(t) = (0..covered).find(|&t| l.values.value_for(t, dep.is_none()).is_none()) {
                return Err(SimError::MissingLiveIn { node: l.node, slot: l.slot, thread: t });
            }
            streams.push(Stream { unit: l.node, slot: l.slot, next: 0, end, values: l.values.clone(), dependent: dep });
        }

        Ok(Machine {
            n,
            units,
            targets,
            streams,
            deliveries: BTreeMap::new(),
            memory: dfg.memory.clone(),
            pending_stores: Vec::new(),
            mem_seen: BTreeMap::new(),
            outstanding: 0,
            mem_cap: params.mem_max_outstanding.unwrap_or(u32::MAX),
            live_out: dfg.live_out.iter().map(|&o| (o, vec![None; n as usize])).collect(),
            dropped_retags: 0,
            selector_discards: 0,
            mem_order_violations: 0,
            trace: traced.then(Vec::new),
        })
    }

    fn deadlock_threshold(&self, params: &MachineParams) -> u64 {
        let unit = self.units.iter().map(|u| u.latency).max().unwrap_or(0);
        let route = self.targets.iter().flatten().map(|t| t.latency).max().unwrap_or(0);
        (unit + route + params.spill_latency + 2) as u64
    }

    fn log(&mut self, cycle: u64, unit: usize, kind: EventKind, tok: Token) {
        if let Some(tr) = &mut self.trace {
            tr.push(TraceEvent { cycle, cell: self.units[unit].cell, kind, thread: tok.thread, value: tok.value });
        }
    }

    fn land(&mut self, cycle: u64) -> bool {
        let Some(ds) = self.deliveries.remove(&cycle) else { return false };
        for d in ds {
            self.units[d.unit].slots[d.slot].land(d.tok);
        }
        true
    }

    /// One token per live-in stream per cycle, ahead of unit results.
    fn inject(&mut self) -> bool {
        let mut progress = false;
        for s in &mut self.streams {
            if s.next >= s.end {
                continue;
            }
            let t = s.next;
            if s.dependent.is_some_and(|d| t >= d) {
                self.selector_discards += 1;
                s.next += 1;
                progress = true;
                continue;
            }
            let buf = &mut self.units[s.unit].slots[s.slot];
            if buf.has_credit() {
                let value = s.values.value_for(t, s.dependent.is_none()).expect("coverage checked");
                buf.put(Token { thread: t, value });
                s.next += 1;
                progress = true;
            }
        }
        progress
    }

    /// Emits finished results. Returns the cycle if anything completed.
    fn complete(&mut self, cycle: u64) -> Option<u64> {
        let mut any = false;
        for ui in 0..self.units.len() {
            let unit = &mut self.units[ui];
            let tok = match unit.held.take() {
                Some(t) => t,
                None => match unit.pipeline.front() {
                    Some(f) if f.done_at == cycle => {
                        let f = unit.pipeline.pop_front().unwrap();
                        if f.mem {
                            self.outstanding -= 1;
                        }
                        f.tok
                    }
                    _ => continue,
                },
            };
            let n = self.n;
            let blocked = self.targets[ui]
                .iter()
                .any(|t| retag_within(tok, t.retag, n).is_some() && !self.units[t.unit].slots[t.slot].has_credit());
            if blocked {
                let unit = &mut self.units[ui];
                unit.held = Some(tok);
                unit.stalls += 1;
                self.log(cycle, ui, EventKind::Stall, tok);
                continue;
            }
            self.log(cycle, ui, EventKind::Complete, tok);
            for ti in 0..self.targets[ui].len() {
                let t = self.targets[ui][ti];
                match retag_within(tok, t.retag, n) {
                    None => {
                        if t.kind == TargetKind::Ildr {
                            self.dropped_retags += 1;
                            let dropped = Token { thread: tok.thread + t.retag, value: tok.value };
                            self.log(cycle, ui, EventKind::Drop, dropped);
                        }
                    }
                    Some(nt) => {
                        if t.kind == TargetKind::Ildr {
                            self.log(cycle, ui, EventKind::Retag, nt);
                        }
                        self.units[t.unit].slots[t.slot].reserve();
                        let at = cycle + t.latency.max(1) as u64;
                        self.deliveries.entry(at).or_default().push(Delivery { unit: t.unit, slot: t.slot, tok: nt });
                    }
                }
            }
            let unit = &mut self.units[ui];
            unit.completed += 1;
            if let Some(vals) = unit.node.and_then(|id| self.live_out.get_mut(&id)) {
                vals[tok.thread as usize] = Some(tok.value);
            }
            any = true;
        }
        any.then_some(cycle)
    }

    fn fire(&mut self, cycle: u64) -> Result<bool, SimError> {
        let mut progress = false;
        for ui in 0..self.units.len() {
            let n = self.n;
            let unit = &mut self.units[ui];
            if unit.held.is_some() {
                // A held result freezes the whole pipeline.
                for f in &mut unit.pipeline {
                    f.done_at += 1;
                }
                continue;
            }
            let thread = match unit.op {
                Op::Node(OpKind::Const(_)) => (unit.next_const < n).then_some(unit.next_const),
                _ => {
                    let (first, rest) = unit.slots.split_first().expect("unit has inputs");
                    first.threads().find(|&t| rest.iter().all(|s| s.contains(t)))
                }
            };
            let Some(thread) = thread else { continue };
            let (op, node) = (unit.op, unit.node);
            let mem = matches!(op, Op::Node(k) if k.is_memory());
            if mem && self.outstanding >= self.mem_cap {
                continue;
            }
            let inputs: Vec<Value> = self.units[ui].slots.iter_mut().map(|s| s.take(thread).unwrap()).collect();
            let value = match op {
                Op::Eor => inputs[0],
                Op::Node(OpKind::Load) => {
                    let addr = inputs[0].as_i64();
                    let node = node.unwrap();
                    let v = *self.memory.get(&addr).ok_or(SimError::OutOfRangeAddress { node, thread, addr })?;
                    let seen = self.mem_seen.entry(addr).or_default();
                    if seen.1.is_some_and(|s| s > thread) {
                        self.mem_order_violations += 1;
                    }
                    seen.0 = seen.0.max(Some(thread));
                    v
                }
                Op::Node(OpKind::Store) => {
                    let addr = inputs[0].as_i64();
                    let seen = self.mem_seen.entry(addr).or_default();
                    if seen.0.is_some_and(|s| s > thread) || seen.1.is_some_and(|s| s > thread) {
                        self.mem_order_violations += 1;
                    }
                    seen.1 = seen.1.max(Some(thread));
                    self.pending_stores.push((addr, inputs[1]));
                    inputs[1]
                }
                Op::Node(k) => k.eval(&inputs),
            };
            let unit = &mut self.units[ui];
            if let Op::Node(OpKind::Const(_)) = unit.op {
                unit.next_const += 1;
            }
            let tok = Token { thread, value };
            unit.pipeline.push_back(InFlight { done_at: cycle + unit.latency as u64, tok, mem });
            unit.issues.push(cycle);
            if mem {
                self.outstanding += 1;
            }
            self.log(cycle, ui, EventKind::Fire, tok);
            progress = true;
        }
        Ok(progress)
    }

    fn apply_stores(&mut self) {
        for (addr, v) in self.pending_stores.drain(..) {
            self.memory.insert(addr, v);
        }
    }

    fn done(&self) -> bool {
        self.units.iter().all(|u| u.completed == self.n && u.held.is_none())
    }

    fn describe_blockage(&self) -> String {
        let mut parts = Vec::new();
        for u in &self.units {
            if u.completed == self.n {
                continue;
            }
            let bufs: Vec<String> =
                u.slots.iter().map(|s| format!("{:?}+{}", s.threads().collect::<Vec<_>>(), s.in_flight())).collect();
            parts.push(format!(
                "{}@{} done {}/{} held={} slots=[{}]",
                u.label,
                u.cell,
                u.completed,
                self.n,
                u.held.map_or("-".to_string(), |t| t.thread.to_string()),
                bufs.join(" ")
            ));
        }
        parts.join("; ")
    }

    fn report(self, mode: Mode, last_completion: u64) -> (SimReport, Vec<TraceEvent>) {
        let total = last_completion;
        let measured_ii = self.units.iter().map(|u| mean_interval(&u.issues)).fold(0.0, f64::max);
        let units = self
            .units
            .iter()
            .map(|u| UnitReport {
                label: u.label.clone(),
                cell: u.cell,
                fires: u.issues.len() as u64,
                stalls: u.stalls,
                utilization: u.issues.len() as f64 / total.max(1) as f64,
            })
            .collect();
        let live_out = self
            .live_out
            .into_iter()
            .map(|(k, vs)| (k, vs.into_iter().map(|v| v.expect("every thread completed")).collect()))
            .collect();
        let report = SimReport {
            mode,
            n_threads: self.n,
            total_cycles: total,
            units,
            dropped_retags: self.dropped_retags,
            selector_discards: self.selector_discards,
            mem_order_violations: self.mem_order_violations,
            live_out,
            measured_ii,
        };
        (report, self.trace.unwrap_or_default())
    }
}

/// Mean gap between consecutive issues over the second half of the threads.
fn mean_interval(issues: &[u64]) -> f64 {
    let n = issues.len();
    if n < 2 {
        return 0.0;
    }
    let from = if n >= 4 { n / 2 } else { 0 };
    (issues[n - 1] - issues[from]) as f64 / (n - 1 - from) as f64
}
