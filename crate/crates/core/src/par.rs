//! Deterministic chunked reductions over grid points.
//!
//! Points are split into fixed-size chunks independent of the thread count;
//! chunk partials are combined by a pairwise tree in chunk order, so results
//! are bitwise reproducible with or without the `parallel` feature.

use std::ops::Range;

pub(crate) const CHUNK: usize = 512;

fn ranges(len: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(len))
        .collect()
}

pub(crate) fn map_chunks<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let r = ranges(len);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        r.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        r.into_iter().map(f).collect()
    }
}

pub(crate) fn pairwise<T, G>(mut parts: Vec<T>, combine: G) -> Option<T>
where
    G: Fn(T, T) -> T,
{
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

pub(crate) fn reduce<T, F, G>(len: usize, f: F, combine: G) -> Option<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
    G: Fn(T, T) -> T,
{
    pairwise(map_chunks(len, f), combine)
}

/// Pointwise map into a vector, evaluated chunkwise.
pub(crate) fn map_points<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_chunks(len, |r| r.map(&f).collect::<Vec<T>>())
        .into_iter()
        .flatten()
        .collect()
}
