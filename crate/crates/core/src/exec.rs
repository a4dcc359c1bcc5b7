//! Data-parallel execution helpers.
//!
//! Hot loops (ensemble propagation, Sobol row evaluation, CEM rollouts,
//! governor fuzz batches) map independent items into an index-ordered `Vec`.
//! With the `parallel` feature the map runs on rayon; without it, or when the
//! caller asks for sequential execution, it runs on a plain iterator. Results
//! are identical either way: per-item randomness is derived statelessly and
//! reductions downstream always run in index order.

/// Map `f` over `0..n` into an index-ordered `Vec`, in parallel when both the
/// `parallel` feature and the `parallel` flag allow it.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Sequential twin of [`map_indexed`], always serial regardless of features.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
