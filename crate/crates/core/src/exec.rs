//! Order-preserving map over independent jobs, on rayon's pool when the
//! `parallel` feature is enabled.

/// How independent jobs (sweep points, suite fixtures, routines) are run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Applies `f` to every item; results come back in input order either way.
/// Without the `parallel` feature `Parallel` runs sequentially.
pub fn par_map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
