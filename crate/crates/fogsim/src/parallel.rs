//! Data-parallel map helpers.
//!
//! Monte-Carlo runs, η sweeps and oracle grid scans are independent per
//! index. With the default `parallel` feature they fan out on rayon;
//! without it the same entry points run sequentially, which keeps the
//! feature-off build dependency-free and makes apples-to-apples benchmarking
//! trivial. Outputs are ordered by index either way, so results never depend
//! on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_seq(n, f)
}

/// Sequential variant, always available; the benchmark suite compares this
/// against [`map_indexed`] on the real workloads.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let a = map_indexed(97, |i| i * i);
        let b = map_indexed_seq(97, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn order_is_by_index() {
        let v = map_indexed(1000, |i| i);
        assert!(v.windows(2).all(|w| w[0] + 1 == w[1]));
    }
}
