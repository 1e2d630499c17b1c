//! Column-parallel helpers.
//!
//! Kernels only ever split work across independent output columns, so a
//! result never depends on how many threads ran it. Without the `parallel`
//! feature the same closures run sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many elements the scheduling overhead outweighs the work.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 1 << 12;

/// Calls `f(j, column)` for every column of a column-major buffer.
pub(crate) fn for_each_column<T, F>(data: &mut [T], rows: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if rows == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if data.len() >= MIN_PARALLEL_LEN {
        data.par_chunks_mut(rows)
            .enumerate()
            .for_each(|(j, col)| f(j, col));
        return;
    }
    for (j, col) in data.chunks_mut(rows).enumerate() {
        f(j, col);
    }
}

/// Like [`for_each_column`] but hands the closure the column offset into a
/// larger buffer, for trailing updates that start part way through a matrix.
pub(crate) fn for_each_column_from<T, F>(data: &mut [T], rows: usize, first: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let start = (first * rows).min(data.len());
    for_each_column(&mut data[start..], rows, |j, col| f(first + j, col));
}

/// Elementwise map into a fresh buffer.
pub(crate) fn map_elements<T, U, F>(src: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if src.len() >= MIN_PARALLEL_LEN {
        return src.par_iter().map(f).collect();
    }
    src.iter().map(f).collect()
}

/// Number of worker threads kernels may use.
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

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Builds `vec![f(0), f(1), ..., f(n-1)]`, in order.
pub(crate) fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if n >= MIN_PARALLEL_LEN {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}
