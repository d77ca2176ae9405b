//! Sequential vs rayon execution of the independent simulations behind a
//! suite run and a trace analysis.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drcgra::exec::Execution;
use drcgra::grid::GridSpec;
use drcgra::harness::{suite, DEFAULT_THREADS};
use drcgra::sim::MachineParams;
use drcgra::trace::{analyze, ingest};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn bench_suite(c: &mut Criterion) {
    let dir = fixtures().join("patterns");
    let spec = GridSpec::default();
    let params = MachineParams::default();
    let mut group = c.benchmark_group("suite");
    group.sample_size(20);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| suite(black_box(&dir), &DEFAULT_THREADS, &spec, &params, exec).unwrap())
        });
    }
    group.finish();
}

/// Many routines, each a ring of blocks with chords, so route enumeration
/// has real work per routine.
fn synthetic_trace(routines: usize, blocks: u64) -> String {
    let mut s = String::from("#aggregated\n");
    for r in 0..routines {
        for b in 0..blocks {
            s += &format!("f{r},{b},{},{}\n", (b + 1) % blocks, 10 + b);
            s += &format!("f{r},{b},{},{}\n", (b * 3 + r as u64) % blocks, 1 + b % 7);
        }
    }
    s
}

fn bench_trace(c: &mut Criterion) {
    let ingested = ingest(&synthetic_trace(64, 14)).unwrap();
    let mut group = c.benchmark_group("trace");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| analyze(black_box(&ingested), 0.0, &[0.9, 0.95], 32, 4096, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_suite, bench_trace);
criterion_main!(benches);
