//! Data-parallel batch helpers. With the `parallel` feature (default) these
//! run on rayon; without it they fall back to plain sequential iteration.
//! Output order matches input order in both builds, so results are identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over a slice, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over a slice, in parallel when the `parallel` feature is enabled.
#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map `f` over indices `0..n`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Send + Sync,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over indices `0..n`, in parallel when the `parallel` feature is enabled.
#[cfg(not(feature = "parallel"))]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Always-sequential map, kept as the baseline side of the benches.
pub fn map_slice_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
