//! Data-parallel map helpers.
//!
//! With the `parallel` feature the closures run on the rayon pool;
//! without it they run sequentially on the calling thread. Results are
//! collected in index order either way, so output bytes do not depend
//! on the feature or the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Caps the global worker pool at `n` threads. Returns whether the cap took
/// effect; it cannot once any parallel work has run, and without the
/// `parallel` feature there is no pool to cap.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

/// Caps the global worker pool at `n` threads. Returns whether the cap took
/// effect; it cannot once any parallel work has run, and without the
/// `parallel` feature there is no pool to cap.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> bool {
    false
}

/// Sequential variant of [`map_indexed`], always available; used by the
/// benchmark suite as the baseline and by callers that must stay on the
/// current thread.
pub fn map_indexed_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_agree_in_order() {
        let a = map_indexed(257, |i| i * i);
        let b = map_indexed_serial(257, |i| i * i);
        assert_eq!(a, b);
    }
}
