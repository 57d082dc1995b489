//! Data-parallel helpers.
//!
//! With the `parallel` feature the maps below run on the rayon pool; without it they run
//! sequentially. Output order always follows the index order, so results do not depend on
//! scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let out = (0..n).into_par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    let out = (0..n).map(f).collect();

    out
}

/// Maps `f` over a slice and collects the results in order.
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let out = items.par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    let out = items.iter().map(f).collect();

    out
}

/// Number of worker threads that [`map_indexed`] will use.
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    let n = rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    let n = 1;

    n
}

/// Sizes the global pool. Has no effect without the `parallel` feature or when the pool was
/// already initialised.
pub fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }

    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
