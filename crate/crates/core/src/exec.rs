//! Execution facade for data-parallel loops.
//!
//! Every hot loop in the crate (per-tree fits, per-row synthesis, folds,
//! search candidates) is an index-to-value map with a pure closure, so it
//! funnels through [`map_indexed`]. With the `parallel` feature (default)
//! that runs on rayon; without it the sequential path below is used.
//! Output order is by index either way, so results are identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential equivalent of [`map_indexed`]. This is the fallback body used
/// when the `parallel` feature is off; it stays available in all builds so
/// the bench suite can compare both modes directly.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 3;
        assert_eq!(map_indexed(1000, f), map_indexed_seq(1000, f));
    }

    #[test]
    fn preserves_index_order() {
        let out = map_indexed(100, |i| i);
        assert!(out.iter().enumerate().all(|(i, &v)| i == v));
    }
}
