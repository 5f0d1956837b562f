//! Index-parallel map with deterministic output order.

use alloc::vec::Vec;

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

/// Like [`map`] but short-circuits on the first error (lowest index wins).
pub fn try_map<T, E, F>(n: usize, f: F) -> core::result::Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> core::result::Result<T, E> + Sync + Send,
{
    map(n, f).into_iter().collect()
}
