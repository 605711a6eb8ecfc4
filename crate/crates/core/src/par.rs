//! Execution policy for the data-parallel kernels.
//!
//! Every parallel kernel in the crate splits its index range into chunks of a
//! fixed size, evaluates the chunks (concurrently when the `parallel` feature is
//! enabled) and folds the partial results in chunk order. The chunking does not
//! depend on the thread count, so results are bitwise identical across thread
//! counts and between the sequential and the parallel path.

use std::ops::Range;

/// Selects how a kernel is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise sequential.
    #[default]
    Parallel,
}

impl Execution {
    /// True when this policy actually runs on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `map` over fixed-size chunks of `0..len` and returns the chunk results in order.
pub fn map_chunks<T, F>(len: usize, chunk: usize, exec: Execution, map: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let ranges: Vec<Range<usize>> = (0..len)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(len))
        .collect();
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return ranges.into_par_iter().map(map).collect();
    }
    let _ = exec;
    ranges.into_iter().map(map).collect()
}

/// Maps `f` over `items`, preserving order.
pub fn map_items<I, T, F>(items: &[I], exec: Execution, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Caps the number of worker threads of the global pool. Returns false when the
/// pool was already initialized or the crate was built without `parallel`.
pub fn set_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Number of worker threads the parallel policy would use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
