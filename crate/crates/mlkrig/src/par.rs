//! Data-parallel loop helpers.
//!
//! With the `parallel` feature (default) these fan out over the rayon pool;
//! without it they run sequentially. Work is always partitioned into
//! fixed, input-determined units whose outputs land in disjoint slots, so
//! results are bitwise identical regardless of thread count.

/// Apply `f` to each fixed-size chunk of `data` (last chunk may be short).
/// `f` receives the chunk index and the chunk itself.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Collect `f(0..n)` in index order.
pub(crate) fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Configure the worker-thread count. `None` keeps the host default.
///
/// Has an effect only the first time a pool is created; later calls are
/// ignored by rayon. A no-op without the `parallel` feature.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}

/// Number of worker threads the crate will use.
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
