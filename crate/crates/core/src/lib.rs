//! Toolchain and cycle-level simulator for a multithreaded tagged-token
//! CGRA that resolves loop-carried dependencies inside the grid.

pub mod deps;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod ir;
pub mod sim;
pub mod trace;
pub mod value;

pub use ir::DataflowGraph;
pub use value::Value;
