//! Order-preserving indexed map, data-parallel when the `parallel` feature is on.

/// Evaluates `f(0), …, f(n-1)` and returns the results in index order.
///
/// `workers = Some(1)` always runs on the calling thread; `None` uses the
/// global pool. Output never depends on the worker count as long as `f` is a
/// pure function of its index.
pub fn map_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    imp::map_indexed(n, workers, f)
}

/// Whether this build can actually run work on more than one thread.
pub const PARALLEL: bool = cfg!(feature = "parallel");

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub fn map_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match workers {
            Some(0) | Some(1) => (0..n).map(f).collect(),
            None => (0..n).into_par_iter().map(f).collect(),
            Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(_) => (0..n).map(f).collect(),
            },
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_indexed<T, F>(n: usize, _workers: Option<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_for_any_worker_count() {
        let serial = map_indexed(1000, Some(1), |i| (i as f64).sqrt());
        for w in [None, Some(2), Some(8)] {
            let other = map_indexed(1000, w, |i| (i as f64).sqrt());
            assert_eq!(serial, other);
        }
        assert!(map_indexed(0, None, |i| i).is_empty());
    }
}
