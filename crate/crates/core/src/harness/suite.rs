use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{speedup, HarnessError, Prepared};
use crate::exec::{par_map, Execution};
use crate::grid::GridSpec;
use crate::sim::{MachineParams, Mode};

/// First line of every suite CSV.
pub const WEIGHTING_NOTE: &str =
    "# weighted speedup = sum(w) / sum(w / speedup); weights are run-time fractions of each loop";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteRow {
    pub fixture: String,
    pub weight: f64,
    pub threads: u32,
    pub cycles_baseline: u64,
    pub cycles_dr: u64,
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    /// Weighted speedup per thread count.
    pub combined: Vec<(u32, f64)>,
    pub warnings: Vec<String>,
}

impl SuiteReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{WEIGHTING_NOTE}\nfixture,weight,threads,cycles_baseline,cycles_dr,speedup\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{:.6}",
                r.fixture, r.weight, r.threads, r.cycles_baseline, r.cycles_dr, r.speedup
            )
            .unwrap();
        }
        let total: f64 = {
            let mut seen = BTreeMap::new();
            for r in &self.rows {
                seen.insert(r.fixture.as_str(), r.weight);
            }
            seen.values().sum()
        };
        for (t, c) in &self.combined {
            writeln!(s, "weighted,{total},{t},,,{c:.6}").unwrap();
        }
        s
    }

    pub fn speedups_at(&self, threads: u32) -> Vec<(&str, f64)> {
        self.rows.iter().filter(|r| r.threads == threads).map(|r| (r.fixture.as_str(), r.speedup)).collect()
    }
}

/// Time-weighted combination: each loop keeps its share `w` of the original
/// run time and shrinks it by its own speedup.
pub fn harmonic_combine(pairs: &[(f64, f64)]) -> f64 {
    let w: f64 = pairs.iter().map(|(w, _)| w).sum();
    let t: f64 = pairs.iter().map(|(w, s)| w / s).sum();
    w / t
}

/// `fixture,weight` lines; an optional header and `#` comments are skipped.
/// Returns `None` when the file does not exist.
pub fn read_weights(path: &Path) -> Result<Option<BTreeMap<String, f64>>, HarnessError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(source) => return Err(HarnessError::Io { path: path.display().to_string(), source }),
    };
    let bad = |line: usize, msg: &str| HarnessError::Weights {
        path: path.display().to_string(),
        msg: format!("line {line}: {msg}"),
    };
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "fixture,weight") {
            continue;
        }
        let Some((name, w)) = line.split_once(',') else {
            return Err(bad(i + 1, "expected `fixture,weight`"));
        };
        let w: f64 = w.trim().parse().map_err(|_| bad(i + 1, "weight is not a number"))?;
        if !w.is_finite() || w < 0.0 {
            return Err(bad(i + 1, "weight must be finite and non-negative"));
        }
        let name = name.trim().trim_end_matches(".dfg").to_string();
        if out.insert(name.clone(), w).is_some() {
            return Err(bad(i + 1, &format!("{name} listed twice")));
        }
    }
    Ok(Some(out))
}

/// Runs every `*.dfg` in `dir` (sorted by name) in both modes at each
/// thread count and combines speedups with the weights in `weights.csv`.
pub fn suite(
    dir: &Path,
    threads: &[u32],
    spec: &GridSpec,
    params: &MachineParams,
    exec: Execution,
) -> Result<SuiteReport, HarnessError> {
    let io = |source| HarnessError::Io { path: dir.display().to_string(), source };
    let mut files: Vec<_> =
        std::fs::read_dir(dir).map_err(io)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>().map_err(io)?;
    files.retain(|p| p.extension().is_some_and(|x| x == "dfg"));
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Experiment { path: dir.display().to_string(), msg: "no .dfg fixtures".into() });
    }
    let names: Vec<String> = files.iter().map(|p| p.file_stem().unwrap().to_string_lossy().into_owned()).collect();

    let mut warnings = Vec::new();
    let weights_path = dir.join("weights.csv");
    let weights: Vec<f64> = match read_weights(&weights_path)? {
        None => {
            let msg = format!("{} not found; using uniform weights", weights_path.display());
            log::warn!("{msg}");
            warnings.push(msg);
            vec![1.0 / names.len() as f64; names.len()]
        }
        Some(w) => {
            let mut out = Vec::new();
            for n in &names {
                out.push(*w.get(n).ok_or_else(|| HarnessError::Weights {
                    path: weights_path.display().to_string(),
                    msg: format!("no weight for fixture {n}"),
                })?);
            }
            if let Some(extra) = w.keys().find(|k| !names.contains(k)) {
                let msg = format!("weight for unknown fixture {extra} ignored");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            if out.iter().sum::<f64>() <= 0.0 {
                return Err(HarnessError::Weights {
                    path: weights_path.display().to_string(),
                    msg: "weights sum to zero".into(),
                });
            }
            out
        }
    };

    let prepared: Vec<Prepared> =
        par_map(&files, exec, |p| Prepared::load(p, spec, params)).into_iter().collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, u32, Mode)> = (0..files.len())
        .flat_map(|f| threads.iter().flat_map(move |&t| [(f, t, Mode::Baseline), (f, t, Mode::Dr)]))
        .collect();
    let cycles: Vec<u64> = par_map(&jobs, exec, |&(f, t, mode)| prepared[f].cycles(params, mode, t))
        .into_iter()
        .collect::<Result<_, _>>()?;

    let rows: Vec<SuiteRow> = jobs
        .chunks(2)
        .zip(cycles.chunks(2))
        .map(|(j, c)| SuiteRow {
            fixture: names[j[0].0].clone(),
            weight: weights[j[0].0],
            threads: j[0].1,
            cycles_baseline: c[0],
            cycles_dr: c[1],
            speedup: speedup(c[0], c[1]),
        })
        .collect();
    let combined = threads
        .iter()
        .map(|&t| {
            let pairs: Vec<(f64, f64)> =
                rows.iter().filter(|r| r.threads == t).map(|r| (r.weight, r.speedup)).collect();
            (t, harmonic_combine(&pairs))
        })
        .collect();
    Ok(SuiteReport { rows, combined, warnings })
}
