//! Data-parallel loops with a sequential fallback.
//!
//! With the `parallel` feature, [`Execution::Parallel`] dispatches through
//! rayon. Without it, both variants run the same sequential loop. Every
//! loop body here writes a disjoint slice and owns its own RNG stream, so
//! results are bit-identical across variants and thread counts.

use crate::error::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") { Execution::Parallel } else { Execution::Sequential }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Calls `f(k, chunk)` for every `chunk_len`-sized chunk of `data`.
pub fn fill_chunks<F>(exec: Execution, data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk_len).enumerate().for_each(|(k, c)| f(k, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk_len).enumerate().for_each(|(k, c)| f(k, c));
}

/// Fallible variant of [`fill_chunks`]. When several chunks fail, the error
/// of the lowest-indexed chunk is returned regardless of schedule.
pub fn try_fill_chunks<F>(exec: Execution, data: &mut [f64], chunk_len: usize, f: F) -> Result<()>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        let results: Vec<Result<()>> = data.par_chunks_mut(chunk_len).enumerate().map(|(k, c)| f(k, c)).collect();
        return results.into_iter().collect();
    }
    let _ = exec;
    data.chunks_mut(chunk_len).enumerate().try_for_each(|(k, c)| f(k, c))
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is by index.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}
