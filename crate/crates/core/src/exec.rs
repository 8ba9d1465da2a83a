//! Data-parallel helpers. With the `parallel` feature these fan out over the
//! rayon pool; without it they run the same closures sequentially. Output order
//! never depends on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to consecutive `chunk`-sized slices of `data`, passing the chunk index.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Zips two equally chunked buffers.
pub(crate) fn for_each_chunk_pair<T, U, F>(src: &[T], dst: &mut [U], src_chunk: usize, dst_chunk: usize, f: F)
where
    T: Sync,
    U: Send,
    F: Fn(usize, &[T], &mut [U]) + Sync + Send,
{
    if src_chunk == 0 || dst_chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    src.par_chunks(src_chunk)
        .zip(dst.par_chunks_mut(dst_chunk))
        .enumerate()
        .for_each(|(i, (s, d))| f(i, s, d));
    #[cfg(not(feature = "parallel"))]
    src.chunks(src_chunk).zip(dst.chunks_mut(dst_chunk)).enumerate().for_each(|(i, (s, d))| f(i, s, d));
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// True when this build fans work out over rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
