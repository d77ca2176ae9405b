#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

#[derive(Clone, Debug)]
enum Src {
    Intra(usize),
    LiveIn(String),
}

struct Builder {
    ops: Vec<String>,
    slots: Vec<Vec<Src>>,
    liveins: usize,
    out: String,
}

const BINARY: [&str; 9] = ["add", "sub", "mul", "and", "or", "cmp", "shift", "fadd", "fmul"];

impl Builder {
    fn producers(&self) -> Vec<usize> {
        (0..self.ops.len()).filter(|&i| self.ops[i] != "sink").collect()
    }

    fn livein_values(&mut self, rng: &mut ChaCha8Rng, need_threads: bool) -> String {
        match rng.gen_range(0..3) {
            0 => "tid".into(),
            1 if !need_threads => rng.gen_range(-5..10).to_string(),
            _ => (0..16).map(|_| rng.gen_range(-20..20).to_string()).collect::<Vec<_>>().join(" "),
        }
    }

    fn source(&mut self, rng: &mut ChaCha8Rng) -> Src {
        let prods = self.producers();
        if !prods.is_empty() && rng.gen_bool(0.65) {
            Src::Intra(prods[rng.gen_range(0..prods.len())])
        } else {
            let vals = self.livein_values(rng, false);
            self.liveins += 1;
            Src::LiveIn(vals)
        }
    }

    fn push(&mut self, op: &str, slots: Vec<Src>) -> usize {
        self.ops.push(op.to_string());
        self.slots.push(slots);
        self.ops.len() - 1
    }
}

/// Executable graph text: at most `max_nodes` nodes, at most two back
/// edges with diff up to 3, never two back edges into one node. Loads read
/// addresses 0..16 only; stores write 100 and up, which nothing reads.
pub fn random_dfg(rng: &mut ChaCha8Rng, max_nodes: usize) -> String {
    let mut b = Builder { ops: Vec::new(), slots: Vec::new(), liveins: 0, out: String::new() };
    let target = rng.gen_range(2..=max_nodes);
    let (mut control, mut sju, mut stores) = (0, 0, 0);
    while b.ops.len() < target {
        let room = target - b.ops.len();
        match rng.gen_range(0..14) {
            0 if room >= 3 => {
                let c = b.push("const 15", vec![]);
                let x = b.source(rng);
                let a = b.push("and", vec![x, Src::Intra(c)]);
                b.push("load", vec![Src::Intra(a)]);
            }
            1 if room >= 2 => {
                let c = b.push(&format!("const {}", 100 + stores), vec![]);
                stores += 1;
                let v = b.source(rng);
                b.push("store", vec![Src::Intra(c), v]);
            }
            2 if control < 3 => {
                control += 1;
                let s = vec![b.source(rng), b.source(rng)];
                b.push("control", s);
            }
            3 if sju < 3 => {
                sju += 1;
                let s = vec![b.source(rng), b.source(rng)];
                b.push("splitjoin", s);
            }
            4 => {
                let v = rng.gen_range(-3..8);
                b.push(&format!("const {v}"), vec![]);
            }
            5 if !b.producers().is_empty() => {
                let s = vec![b.source(rng)];
                b.push("sink", s);
            }
            _ => {
                let op = BINARY[rng.gen_range(0..BINARY.len())];
                let s = vec![b.source(rng), b.source(rng)];
                b.push(op, s);
            }
        }
    }

    // Back edges land on live-in slots whose node reaches the producer.
    let n = b.ops.len();
    let mut reach = vec![vec![false; n]; n];
    for i in (0..n).rev() {
        reach[i][i] = true;
        for j in i + 1..n {
            if b.slots[j].iter().any(|s| matches!(s, Src::Intra(k) if *k == i)) {
                let below = reach[j].clone();
                for (r, &x) in reach[i].iter_mut().zip(&below) {
                    *r |= x;
                }
            }
        }
    }
    let mut backs: Vec<(usize, usize, usize, u32)> = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let candidates: Vec<(usize, usize)> = (0..n)
            .filter(|&c| !backs.iter().any(|bk| bk.1 == c))
            .flat_map(|c| (0..b.slots[c].len()).map(move |s| (c, s)))
            .filter(|&(c, s)| matches!(b.slots[c][s], Src::LiveIn(_)) && !b.ops[c].starts_with("store"))
            .collect();
        let Some(&(c, s)) = candidates.get(rng.gen_range(0..candidates.len().max(1))) else { break };
        let prods: Vec<usize> = (c..n).filter(|&p| reach[c][p] && b.ops[p] != "sink").collect();
        if prods.is_empty() {
            continue;
        }
        let p = prods[rng.gen_range(0..prods.len())];
        let diff = rng.gen_range(1..=3);
        if let Src::LiveIn(v) = &b.slots[c][s] {
            if v != "tid" && v.split(' ').count() < diff as usize {
                let init: Vec<String> = (0..diff).map(|_| rng.gen_range(-9..9).to_string()).collect();
                b.slots[c][s] = Src::LiveIn(init.join(" "));
            }
        }
        backs.push((p, c, s, diff));
    }

    let out = &mut b.out;
    for (i, op) in b.ops.iter().enumerate() {
        writeln!(out, "node {i} {op}").unwrap();
    }
    let mut li = 0;
    for (i, slots) in b.slots.iter().enumerate() {
        for (s, src) in slots.iter().enumerate() {
            match src {
                Src::Intra(k) => writeln!(out, "edge {k} {i} {s}").unwrap(),
                Src::LiveIn(v) => {
                    writeln!(out, "livein v{li} {i} {s} {v}").unwrap();
                    li += 1;
                }
            }
        }
    }
    for (p, c, s, d) in &backs {
        writeln!(out, "back {p} {c} {s} {d}").unwrap();
    }
    for (i, op) in b.ops.iter().enumerate() {
        if op != "sink" {
            writeln!(out, "liveout {i}").unwrap();
        }
    }
    for a in 0..16 {
        writeln!(out, "mem {a} {}", (a * 37) % 11 - 4).unwrap();
    }
    b.out
}

/// Simple cycles by trying every ordering of every node subset, rotated to
/// start at the subset's smallest node, with the smallest edge count on the
/// cycle. Exponential; meant for graphs of up to 8 nodes.
pub fn brute_force_cycles(n: usize, edges: &BTreeMap<(u64, u64), u64>) -> Vec<(Vec<u64>, u64)> {
    fn perms(rest: &mut Vec<u64>, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            cur.push(x);
            perms(rest, cur, out);
            cur.pop();
            rest.insert(i, x);
        }
    }
    let mut found = Vec::new();
    for mask in 1u32..(1 << n) {
        let nodes: Vec<u64> = (0..n as u64).filter(|i| mask & (1 << i) != 0).collect();
        let mut orders = Vec::new();
        perms(&mut nodes[1..].to_vec(), &mut vec![nodes[0]], &mut orders);
        for order in orders {
            let hops: Vec<Option<&u64>> =
                (0..order.len()).map(|i| edges.get(&(order[i], order[(i + 1) % order.len()]))).collect();
            if hops.iter().all(Option::is_some) {
                found.push((order, hops.into_iter().map(|c| *c.unwrap()).min().unwrap()));
            }
        }
    }
    found.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    found
}

/// Aggregated trace text for one routine `r` with the given edge counts.
pub fn aggregated_text(edges: &BTreeMap<(u64, u64), u64>) -> String {
    let mut s = String::from("#aggregated\n");
    for ((a, b), c) in edges {
        writeln!(s, "r,{a},{b},{c}").unwrap();
    }
    s
}
