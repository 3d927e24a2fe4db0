//! Data-parallel loop helpers with a sequential fallback.
//!
//! Every helper is deterministic: results are written per index (or folded
//! in index order by the caller), never reduced in a thread-dependent order,
//! so builds with and without the `parallel` feature produce bit-identical
//! output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Collect `f(0), f(1), ..., f(n-1)` preserving index order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Apply `f(chunk_index, chunk)` over consecutive `chunk` slices of `buf`.
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut<T, F>(buf: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    buf.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut<T, F>(buf: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    buf.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Apply `f(chunk_index, a_chunk, b_chunk)` over two equally chunked buffers.
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut2<T, U, F>(a: &mut [T], b: &mut [U], chunk: usize, f: F)
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut [U]) + Sync + Send,
{
    a.par_chunks_mut(chunk)
        .zip(b.par_chunks_mut(chunk))
        .enumerate()
        .for_each(|(i, (ca, cb))| f(i, ca, cb));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut2<T, U, F>(a: &mut [T], b: &mut [U], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T], &mut [U]),
{
    a.chunks_mut(chunk)
        .zip(b.chunks_mut(chunk))
        .enumerate()
        .for_each(|(i, (ca, cb))| f(i, ca, cb));
}
