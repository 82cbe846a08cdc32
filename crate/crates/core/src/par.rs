//! Data-parallel fan-out with a sequential fallback.
//!
//! Built with the `parallel` feature (default), work is spread over a scoped
//! worker pool; without it, the same entry point runs sequentially. Output
//! order always matches input order, so results are identical either way and
//! across worker counts.

/// `workers` semantics: 0 picks the library default; 1 forces the in-thread
/// sequential path; n > 1 uses a pool of exactly n threads.
#[cfg(feature = "parallel")]
pub fn map_slice<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(&f).collect()
}
