//! Deterministic data-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run the same closures
//! sequentially. Work is always partitioned into caller-chosen chunks and results are collected
//! in chunk order, so any reduction done on the returned vectors is independent of the thread
//! count.

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f(chunk_index, chunk)` over fixed-size chunks of `items`.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    assert!(chunk > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items
            .par_chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items
            .chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect()
    }
}

/// Runs `f(chunk_index, chunk)` over fixed-size mutable chunks of `items`.
pub fn for_each_chunk_mut<T, F>(items: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items
            .chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (or the global pool when `None`).
///
/// Without the `parallel` feature the closure simply runs on the calling thread.
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("failed to build thread pool")
                .install(f),
            None => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Number of worker threads available to the current scope.
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_results_keep_order() {
        let items: Vec<u32> = (0..1000).collect();
        let sums = map_chunks(&items, 64, |i, c| (i, c.iter().sum::<u32>()));
        assert_eq!(sums.len(), 16);
        for (k, (i, _)) in sums.iter().enumerate() {
            assert_eq!(*i, k);
        }
        assert_eq!(sums.iter().map(|s| s.1).sum::<u32>(), 999 * 1000 / 2);
    }

    #[test]
    fn results_do_not_depend_on_pool_size() {
        let run = |t| {
            with_threads(Some(t), || {
                map_indexed(257, |i| (i as f64).sqrt().sin())
                    .iter()
                    .sum::<f64>()
            })
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
    }

    #[test]
    fn mutable_chunks_cover_everything() {
        let mut v = vec![0usize; 130];
        for_each_chunk_mut(&mut v, 16, |ci, c| {
            for (j, x) in c.iter_mut().enumerate() {
                *x = ci * 16 + j;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
