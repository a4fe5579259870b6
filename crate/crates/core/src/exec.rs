//! Row-level work distribution.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans rows out over the
//! rayon pool. Without it, every mode runs sequentially. Row results never
//! depend on the schedule, so both modes produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How row-parallel operations are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Call `f(row_index, row)` for each `row_len`-sized chunk of `out`.
pub(crate) fn for_each_row<T, F>(exec: Execution, out: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(row_len).enumerate().for_each(|(r, row)| f(r, row));
        return;
    }
    let _ = exec;
    out.chunks_mut(row_len).enumerate().for_each(|(r, row)| f(r, row));
}

/// Evaluate `f` on `0..n` and collect in index order.
pub(crate) fn map_indices<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}
