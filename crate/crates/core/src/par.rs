//! Data-parallel maps that fall back to a plain loop on a one-thread pool,
//! where handing work to the pool only adds scheduler latency.

use rayon::prelude::*;

fn serial() -> bool {
    rayon::current_num_threads() == 1
}

pub(crate) fn map_range<R: Send>(
    n: usize,
    min_len: usize,
    f: impl Fn(usize) -> R + Sync + Send,
) -> Vec<R> {
    if serial() {
        (0..n).map(f).collect()
    } else {
        (0..n)
            .into_par_iter()
            .with_min_len(min_len)
            .map(f)
            .collect()
    }
}

pub(crate) fn map_slice<T: Sync, R: Send>(
    items: &[T],
    min_len: usize,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    if serial() {
        items.iter().map(f).collect()
    } else {
        items.par_iter().with_min_len(min_len).map(f).collect()
    }
}
