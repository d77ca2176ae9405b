//! Heterogeneous unit grid: placement, static routing and ILDR attachment.

mod ildr;
mod place;
mod route;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deps::{find_deps_with, DepError};
use crate::ir::{DataflowGraph, LatencyClass, NodeId, OpKind};

pub use ildr::{attach_ildr, EorUpdate, Feedback, GridConfig, IldrEdge, SpillRoute};
pub use place::place;
pub use route::{route, xy_path, Route};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnitClass {
    #[serde(rename = "COMPUTE")]
    Compute,
    #[serde(rename = "LDST")]
    Ldst,
    #[serde(rename = "CONTROL")]
    Control,
    #[serde(rename = "SJU")]
    Sju,
}

impl UnitClass {
    pub fn of(kind: &OpKind) -> UnitClass {
        match kind {
            OpKind::Alu(_) | OpKind::Fpu(_) | OpKind::Const(_) | OpKind::Sink => UnitClass::Compute,
            OpKind::Load | OpKind::Store => UnitClass::Ldst,
            OpKind::Control => UnitClass::Control,
            OpKind::SplitJoin => UnitClass::Sju,
        }
    }
}

impl fmt::Display for UnitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitClass::Compute => "COMPUTE",
            UnitClass::Ldst => "LDST",
            UnitClass::Control => "CONTROL",
            UnitClass::Sju => "SJU",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub fn new(row: u32, col: u32) -> Cell {
        Cell { row, col }
    }

    pub fn hops(self, other: Cell) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}c{}", self.row, self.col)
    }
}

/// Cycles per unit class. Loads take the memory latency from the machine
/// parameters instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyTable {
    pub alu: u32,
    pub fpu: u32,
    pub store: u32,
    pub control: u32,
    pub splitjoin: u32,
}

impl Default for LatencyTable {
    fn default() -> Self {
        LatencyTable { alu: 1, fpu: 4, store: 1, control: 1, splitjoin: 1 }
    }
}

impl LatencyTable {
    pub fn get(&self, class: LatencyClass, mem_latency: u32) -> u32 {
        match class {
            LatencyClass::Alu => self.alu,
            LatencyClass::Fpu => self.fpu,
            LatencyClass::Load => mem_latency,
            LatencyClass::Store => self.store,
            LatencyClass::Control => self.control,
            LatencyClass::SplitJoin => self.splitjoin,
        }
    }

    pub fn of(&self, kind: &OpKind, mem_latency: u32) -> u32 {
        self.get(kind.latency_class(), mem_latency)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    /// `unit_map[row][col]`.
    pub unit_map: Vec<Vec<UnitClass>>,
    pub latencies: LatencyTable,
    pub hop_latency: u32,
    pub token_buffer_depth: u32,
}

#[derive(Debug, Error)]
pub enum GridSpecError {
    #[error("grid must have at least one cell")]
    Empty,
    #[error("unit_map is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    Shape { rows: u32, cols: u32, got_rows: usize, got_cols: usize },
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("grid spec: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// On-disk form; a missing `unit_map` gets the default column layout.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpecFile {
    rows: u32,
    cols: u32,
    unit_map: Option<Vec<Vec<UnitClass>>>,
    #[serde(default)]
    latencies: LatencyTable,
    #[serde(default = "one")]
    hop_latency: u32,
    #[serde(default = "sixteen")]
    token_buffer_depth: u32,
}

fn one() -> u32 {
    1
}

fn sixteen() -> u32 {
    16
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::with_default_layout(8, 8)
    }
}

impl GridSpec {
    /// Columns 0-1 load/store, column 2 alternating control (even rows) and
    /// split/join (odd rows), everything else compute.
    pub fn with_default_layout(rows: u32, cols: u32) -> GridSpec {
        let unit_map = (0..rows).map(|r| (0..cols).map(|c| default_class(r, c)).collect()).collect();
        GridSpec { rows, cols, unit_map, latencies: LatencyTable::default(), hop_latency: 1, token_buffer_depth: 16 }
    }

    /// One-row grid, convenient in tests: `GridSpec::row("LDST,COMPUTE")`.
    pub fn row(classes: &str) -> Result<GridSpec, GridSpecError> {
        let row: Vec<UnitClass> = classes
            .split(',')
            .map(|s| serde_json::from_value(serde_json::Value::String(s.trim().to_string())))
            .collect::<Result<_, _>>()?;
        let cols = row.len() as u32;
        let spec = GridSpec { rows: 1, cols, unit_map: vec![row], ..GridSpec::with_default_layout(1, cols) };
        spec.check()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<GridSpec, GridSpecError> {
        let f: GridSpecFile = serde_json::from_str(text)?;
        let unit_map = f
            .unit_map
            .unwrap_or_else(|| (0..f.rows).map(|r| (0..f.cols).map(|c| default_class(r, c)).collect()).collect());
        let spec = GridSpec {
            rows: f.rows,
            cols: f.cols,
            unit_map,
            latencies: f.latencies,
            hop_latency: f.hop_latency,
            token_buffer_depth: f.token_buffer_depth,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<GridSpec, GridSpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| GridSpecError::Io { path: path.display().to_string(), source })?;
        GridSpec::from_json(&text)
    }

    pub fn check(&self) -> Result<(), GridSpecError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(GridSpecError::Empty);
        }
        let bad_shape =
            self.unit_map.len() != self.rows as usize || self.unit_map.iter().any(|r| r.len() != self.cols as usize);
        if bad_shape {
            return Err(GridSpecError::Shape {
                rows: self.rows,
                cols: self.cols,
                got_rows: self.unit_map.len(),
                got_cols: self.unit_map.first().map_or(0, Vec::len),
            });
        }
        let l = &self.latencies;
        for (name, v) in [
            ("latencies.alu", l.alu),
            ("latencies.fpu", l.fpu),
            ("latencies.store", l.store),
            ("latencies.control", l.control),
            ("latencies.splitjoin", l.splitjoin),
            ("hop_latency", self.hop_latency),
            ("token_buffer_depth", self.token_buffer_depth),
        ] {
            if v == 0 {
                return Err(GridSpecError::Zero(name));
            }
        }
        Ok(())
    }

    pub fn class_at(&self, cell: Cell) -> UnitClass {
        self.unit_map[cell.row as usize][cell.col as usize]
    }

    /// All cells in row-major order, which is also the tie-break order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn cells_of(&self, class: UnitClass) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(move |&c| self.class_at(c) == class)
    }

    pub fn route_latency(&self, a: Cell, b: Cell) -> u32 {
        a.hops(b) * self.hop_latency
    }
}

fn default_class(row: u32, col: u32) -> UnitClass {
    match col {
        0 | 1 => UnitClass::Ldst,
        2 if row.is_multiple_of(2) => UnitClass::Control,
        2 => UnitClass::Sju,
        _ => UnitClass::Compute,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("graph needs {needed} {class} units, grid has {available}")]
    CapacityExceeded { class: UnitClass, needed: usize, available: usize },
    #[error("node {node} has two loop-carried inputs; one ILDR per unit")]
    UnsupportedDualDependency { node: NodeId },
    #[error(transparent)]
    Deps(#[from] DepError),
}

/// Placement, routing and ILDR attachment in one step.
pub fn map(dfg: &DataflowGraph, spec: &GridSpec, mem_latency: u32) -> Result<GridConfig, MapError> {
    let placement = place(dfg, spec)?;
    let deps = find_deps_with(dfg, &spec.latencies, mem_latency)?;
    attach_ildr(dfg, &deps, &placement, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_columns() {
        let g = GridSpec::default();
        assert_eq!(g.cells().count(), 64);
        assert_eq!(g.cells_of(UnitClass::Ldst).count(), 16);
        assert_eq!(g.cells_of(UnitClass::Control).count(), 4);
        assert_eq!(g.cells_of(UnitClass::Sju).count(), 4);
        assert_eq!(g.cells_of(UnitClass::Compute).count(), 40);
        assert_eq!(g.class_at(Cell::new(1, 2)), UnitClass::Sju);
    }

    #[test]
    fn json_defaults_and_errors() {
        let g = GridSpec::from_json(r#"{"rows": 2, "cols": 4, "latencies": {"fpu": 6}}"#).unwrap();
        assert_eq!(g.latencies.fpu, 6);
        assert_eq!(g.latencies.alu, 1);
        assert_eq!(g.token_buffer_depth, 16);
        assert_eq!(g.class_at(Cell::new(0, 3)), UnitClass::Compute);
        assert!(matches!(
            GridSpec::from_json(r#"{"rows": 1, "cols": 2, "unit_map": [["LDST"]]}"#),
            Err(GridSpecError::Shape { .. })
        ));
        assert!(matches!(
            GridSpec::from_json(r#"{"rows": 1, "cols": 1, "hop_latency": 0}"#),
            Err(GridSpecError::Zero("hop_latency"))
        ));
        let round = GridSpec::from_json(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(round, g);
    }

    #[test]
    fn row_helper() {
        let g = GridSpec::row("LDST, COMPUTE,SJU").unwrap();
        assert_eq!(g.unit_map, vec![vec![UnitClass::Ldst, UnitClass::Compute, UnitClass::Sju]]);
        assert!(GridSpec::row("ALU").is_err());
    }
}
