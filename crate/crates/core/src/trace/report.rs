use std::collections::BTreeSet;

use serde::Serialize;

use super::{enumerate_loops, BbId, Ingested, LoopRoute, RoutineGraph};
use crate::exec::{par_map, Execution};

/// Recorded in every report next to the numbers it qualifies.
pub const ITERATION_NOTE: &str =
    "route iterations are the smallest edge count along the cycle; run time is counted in dynamic instructions";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteStats {
    pub blocks: Vec<BbId>,
    pub iterations: u64,
    pub instrs_per_iteration: u64,
    /// Share of the routine's instructions, scaled so a routine's routes
    /// never claim more than its loop fraction.
    pub prevalence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoutineStats {
    pub routine: String,
    pub instrs: u64,
    pub loop_instrs: u64,
    /// Share of all analyzed instructions.
    pub run_fraction: f64,
    pub loop_fraction: f64,
    pub truncated: bool,
    pub routes: Vec<RouteStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coverage {
    pub p: f64,
    pub routes_needed: usize,
    pub total_routes: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrevalenceReport {
    pub note: &'static str,
    pub min_routine_frac: f64,
    pub total_instrs: u64,
    pub routines: Vec<RoutineStats>,
    /// Routines under the run-time filter, left out of the aggregate.
    pub filtered: Vec<String>,
    /// Loop instructions over all instructions of the kept routines.
    pub loop_fraction: f64,
    pub coverage: Vec<Coverage>,
    pub warnings: Vec<String>,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn routine_stats(g: &RoutineGraph, routes: Vec<LoopRoute>, truncated: bool, total: u64) -> RoutineStats {
    let instrs = g.dynamic_instrs();
    let covered: BTreeSet<BbId> = routes.iter().flat_map(|r| r.blocks.iter().copied()).collect();
    let loop_instrs: u64 = covered.iter().map(|b| g.blocks[b].dynamic_instrs()).sum();
    let loop_fraction = ratio(loop_instrs, instrs);
    let raw: Vec<f64> = routes.iter().map(|r| ratio(r.iterations * r.instrs_per_iteration, instrs)).collect();
    let sum: f64 = raw.iter().sum();
    let scale = if sum > loop_fraction { loop_fraction / sum } else { 1.0 };
    RoutineStats {
        routine: g.name.clone(),
        instrs,
        loop_instrs,
        run_fraction: ratio(instrs, total),
        loop_fraction,
        truncated,
        routes: routes
            .into_iter()
            .zip(raw)
            .map(|(r, p)| RouteStats {
                blocks: r.blocks,
                iterations: r.iterations,
                instrs_per_iteration: r.instrs_per_iteration,
                prevalence: p * scale,
            })
            .collect(),
    }
}

/// Per-routine loop time, filtered by share of the total run time, and the
/// instruction-weighted loop fraction of the routines that pass.
pub fn prevalence_report(
    ingested: &Ingested,
    min_routine_frac: f64,
    max_len: usize,
    max_routes: usize,
    exec: Execution,
) -> PrevalenceReport {
    let graphs: Vec<&RoutineGraph> = ingested.routines.values().collect();
    let total: u64 = graphs.iter().map(|g| g.dynamic_instrs()).sum();
    let routines: Vec<RoutineStats> = par_map(&graphs, exec, |g| {
        let e = enumerate_loops(g, max_len, max_routes);
        routine_stats(g, e.routes, e.truncated, total)
    });
    let mut warnings = ingested.warnings.clone();
    for r in routines.iter().filter(|r| r.truncated) {
        warnings.push(format!("routine {}: route enumeration stopped at {max_routes} routes", r.routine));
    }
    let (kept, filtered): (Vec<&RoutineStats>, Vec<&RoutineStats>) =
        routines.iter().partition(|r| r.run_fraction > min_routine_frac);
    let loop_fraction = ratio(kept.iter().map(|r| r.loop_instrs).sum(), kept.iter().map(|r| r.instrs).sum());
    PrevalenceReport {
        note: ITERATION_NOTE,
        min_routine_frac,
        total_instrs: total,
        filtered: filtered.iter().map(|r| r.routine.clone()).collect(),
        loop_fraction,
        routines,
        coverage: Vec::new(),
        warnings,
    }
}

/// Prevalence plus route coverage at each `p`, counted over the routes of
/// the routines that pass the filter.
pub fn analyze(
    ingested: &Ingested,
    min_routine_frac: f64,
    ps: &[f64],
    max_len: usize,
    max_routes: usize,
    exec: Execution,
) -> PrevalenceReport {
    let mut report = prevalence_report(ingested, min_routine_frac, max_len, max_routes, exec);
    let counts: Vec<u64> = report
        .routines
        .iter()
        .filter(|r| !report.filtered.contains(&r.routine))
        .flat_map(|r| r.routes.iter().map(|x| x.iterations))
        .collect();
    if counts.is_empty() && !ps.is_empty() {
        let msg = "no loop routes; coverage is 0 of 0".to_string();
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    report.coverage = ps.iter().map(|&p| coverage(&counts, p)).collect();
    report
}

/// Fewest routes whose iteration counts reach a share `p` of all
/// iterations. The comparison is done in integers with `p` rounded to
/// parts per billion so fixture thresholds are hit exactly.
pub fn coverage(counts: &[u64], p: f64) -> Coverage {
    assert!(p > 0.0 && p <= 1.0, "coverage share must be in (0, 1], got {p}");
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let total: u128 = sorted.iter().map(|&c| c as u128).sum();
    let ppb = (p * 1e9).round() as u128;
    let mut k = 0;
    if total > 0 {
        let mut acc: u128 = 0;
        for c in &sorted {
            acc += *c as u128;
            k += 1;
            if acc * 1_000_000_000 >= ppb * total {
                break;
            }
        }
    }
    Coverage { p, routes_needed: k, total_routes: sorted.len(), fraction: ratio(k as u64, sorted.len() as u64) }
}
