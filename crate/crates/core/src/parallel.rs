//! Map over independent work items, data-parallel when the `parallel`
//! feature is on and more than one thread is requested.

/// Apply `f` to every item, preserving order. `threads == 0` uses the
/// global pool size.
pub fn map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads != 1 && items.len() > 1 {
            use rayon::prelude::*;
            let run = || items.par_iter().map(&f).collect();
            if threads == 0 {
                return run();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => return pool.install(run),
                Err(e) => log::warn!("thread pool unavailable, running sequentially: {e}"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    map_sequential(items, f)
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn parallel_matches_sequential(xs in prop::collection::vec(-1e6f64..1e6, 0..200), threads in 0usize..5) {
            let f = |x: &f64| (x.sin() * 1e3).round();
            prop_assert_eq!(map(&xs, threads, f), map_sequential(&xs, f));
        }
    }
}
