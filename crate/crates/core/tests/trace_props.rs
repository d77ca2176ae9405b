mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use drcgra::exec::Execution;
use drcgra::trace::{coverage, enumerate_loops, ingest, prevalence_report, RoutineGraph};
use proptest::prelude::*;

use common::{aggregated_text, brute_force_cycles, fixture};

fn edge_map() -> impl Strategy<Value = (u64, BTreeMap<(u64, u64), u64>)> {
    (1u64..=8).prop_flat_map(|n| (Just(n), prop::collection::btree_map((0..n, 0..n), 1u64..100, 0..(n * n) as usize)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn loops_equal_brute_force((n, edges) in edge_map()) {
        let g = ingest(&aggregated_text(&edges)).unwrap().routines.into_values().next();
        let got: Vec<(Vec<u64>, u64)> = g
            .map(|g| enumerate_loops(&g, 64, usize::MAX).routes.into_iter().map(|r| (r.blocks, r.iterations)).collect())
            .unwrap_or_default();
        prop_assert_eq!(got, brute_force_cycles(n as usize, &edges));
    }

    #[test]
    fn coverage_is_monotone(counts in prop::collection::vec(1u64..1000, 1..60), a in 1u32..=1000, b in 1u32..=1000) {
        let (lo, hi) = (a.min(b) as f64 / 1000.0, a.max(b) as f64 / 1000.0);
        let (kl, kh) = (coverage(&counts, lo), coverage(&counts, hi));
        prop_assert!(kl.routes_needed <= kh.routes_needed);
        prop_assert!((1..=counts.len()).contains(&kh.routes_needed));
        // Minimal: one route fewer falls short.
        let mut sorted = counts.clone();
        sorted.sort_unstable_by(|x, y| y.cmp(x));
        let total: u64 = sorted.iter().sum();
        let top = |k: usize| sorted[..k].iter().sum::<u64>() as f64;
        prop_assert!(top(kh.routes_needed) >= hi * total as f64 - 1e-6);
        if kh.routes_needed > 1 {
            prop_assert!(top(kh.routes_needed - 1) < hi * total as f64);
        }
    }

    /// One execution written both ways: per-event stream, and edge counts
    /// with block sizes and execution counts.
    #[test]
    fn stream_and_aggregate_agree(walk in prop::collection::vec((0u8..2, 0u64..6), 0..200), sizes in prop::collection::vec(1u64..9, 6)) {
        let mut stream = String::new();
        let mut last: BTreeMap<u8, u64> = BTreeMap::new();
        let mut edges: BTreeMap<(u8, u64, u64), u64> = BTreeMap::new();
        let mut execs: BTreeMap<(u8, u64), u64> = BTreeMap::new();
        for &(r, bb) in &walk {
            writeln!(stream, "r{r},{bb},{}", sizes[bb as usize]).unwrap();
            if let Some(p) = last.insert(r, bb) {
                *edges.entry((r, p, bb)).or_default() += 1;
            }
            *execs.entry((r, bb)).or_default() += 1;
        }
        let mut agg = String::from("#aggregated\n");
        for (&(r, bb), e) in &execs {
            writeln!(agg, "#bb r{r},{bb},{},{e}", sizes[bb as usize]).unwrap();
        }
        for ((r, a, b), c) in &edges {
            writeln!(agg, "r{r},{a},{b},{c}").unwrap();
        }
        prop_assert_eq!(ingest(&stream).unwrap().routines, ingest(&agg).unwrap().routines);
    }

    #[test]
    fn prevalence_fractions_stay_in_range((_n, edges) in edge_map()) {
        let rep = prevalence_report(&ingest(&aggregated_text(&edges)).unwrap(), 0.0, 32, 4096, Execution::Sequential);
        for r in &rep.routines {
            prop_assert!((0.0..=1.0).contains(&r.loop_fraction));
            let sum: f64 = r.routes.iter().map(|x| x.prevalence).sum();
            prop_assert!(sum <= r.loop_fraction + 1e-9);
            prop_assert!(sum <= 1.0 + 1e-9);
        }
        prop_assert!((0.0..=1.0).contains(&rep.loop_fraction));
    }
}

#[test]
fn nested_cycles_against_hand_enumeration() {
    // A->B->A and A->B->C->A: exactly two simple cycles.
    let mut g = RoutineGraph::new("r");
    for (a, b, c) in [(0, 1, 10), (1, 0, 6), (1, 2, 4), (2, 0, 4)] {
        g.blocks.entry(a).or_default();
        g.blocks.entry(b).or_default();
        g.edges.insert((a, b), c);
    }
    let routes = enumerate_loops(&g, 32, 4096).routes;
    let got: Vec<Vec<u64>> = routes.iter().map(|r| r.blocks.clone()).collect();
    assert_eq!(got, vec![vec![0, 1], vec![0, 1, 2]]);
}

#[test]
fn fixture_stream_trace() {
    let text = std::fs::read_to_string(fixture("trace/stream_small.trc")).unwrap();
    let got = ingest(&text).unwrap();
    let main = &got.routines["main"];
    assert_eq!(main.edges[&(0x20, 0x30)], 3);
    assert_eq!(main.edges[&(0x30, 0x20)], 3);
    let rep = prevalence_report(&got, 0.01, 32, 4096, Execution::Sequential);
    // main: 4 + 4*6 + 3*3 + 2 = 39 instructions, 33 in the loop; init: 50.
    assert_eq!(rep.total_instrs, 89);
    assert!((rep.loop_fraction - 33.0 / 89.0).abs() < 1e-12);
}
