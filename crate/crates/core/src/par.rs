//! Parallel map with a sequential fallback.
//!
//! With the default `parallel` feature the closures run on the rayon pool;
//! without it the same code runs sequentially. Results are collected in
//! input order and reductions happen sequentially afterwards, so outputs do
//! not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential variant, kept available for benchmarking against the pool.
pub fn map_indexed_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let out = map_indexed(100, |i| i * i);
        let seq = map_indexed_seq(100, |i| i * i);
        assert_eq!(out, seq);
    }
}
