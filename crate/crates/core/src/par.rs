//! Order-preserving parallel map, serial without the `parallel` feature.

#[cfg(feature = "parallel")]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fix the size of the global worker pool. Returns false if it was already built.
#[cfg(feature = "parallel")]
pub fn set_jobs(jobs: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn set_jobs(_jobs: usize) -> bool {
    true
}
