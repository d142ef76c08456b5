//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces results in index order and reduces in fixed-size
//! chunks, so the floating-point result does not depend on thread scheduling
//! or on whether the `parallel` feature is compiled in.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by [`chunked_sum`].
pub const SUM_CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when compiled with the `parallel` feature, sequential otherwise.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()` with optional parallelism.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
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

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Sums `len`-long vectors produced by `fill(i, acc)` for `i in 0..n`.
///
/// `fill` adds the contribution of item `i` into `acc`. Items are grouped into
/// chunks of [`SUM_CHUNK`]; each chunk is accumulated sequentially and the chunk
/// totals are added in order.
pub fn chunked_sum<F>(exec: Execution, n: usize, len: usize, fill: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(SUM_CHUNK);
    let partials = map_range(exec, chunks, |c| {
        let mut acc = vec![0.0; len];
        for i in (c * SUM_CHUNK)..((c + 1) * SUM_CHUNK).min(n) {
            fill(i, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
