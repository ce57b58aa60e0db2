//! Data-parallel driver with a sequential fallback.
//!
//! All ensemble work in the crate funnels through [`indexed_map`]: a pure
//! function applied to indices `0..n`, with results collected in index
//! order. With the `parallel` feature the map runs on rayon; without it the
//! same closure runs on one thread. Output never depends on the schedule,
//! because each index owns its RNG stream and writes only its own slot.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every index in `0..n`, collecting results in index order.
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        indexed_map_seq(n, f)
    }
}

/// Sequential reference implementation of [`indexed_map`].
///
/// Always compiled: the criterion benches compare it against the parallel
/// path, and tests use it to confirm schedule independence.
pub fn indexed_map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Runs `f` inside a rayon pool of `threads` workers (0 = rayon default).
///
/// Without the `parallel` feature the pool size is ignored and `f` runs
/// inline.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            f()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("failed to build thread pool");
            pool.install(f)
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
