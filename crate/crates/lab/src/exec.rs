//! Execution strategy for the data-parallel inner loops.
//!
//! Hot loops (kernel assembly, sweeps, Monte-Carlo estimates) map an index
//! range into a `Vec` and reduce it with a fixed pairwise tree, so the result
//! is bit-identical whether the map phase ran in parallel or not. Without the
//! `parallel` feature, [`Execution::Parallel`] degrades to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Maps `0..n` through `f`, preserving index order in the output.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => (0..n).map(f).collect(),
        Execution::Sequential => (0..n).map(f).collect(),
    }
}

/// Pairwise (tree) summation. Schedule-independent and more accurate than a
/// naive left fold for long sums.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Sums `f(i)` over `0..n` with the pairwise tree, map phase per `exec`.
pub fn sum_indexed<F>(exec: Execution, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let terms = map_indexed(exec, n, f);
    pairwise_sum(&terms)
}
