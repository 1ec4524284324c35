//! Order-preserving map over independent work items, parallel when the
//! `parallel` feature is enabled.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

static MODE: AtomicU8 = AtomicU8::new(0);

/// Process-wide default used by [`par_map`].
pub fn set_mode(mode: ExecMode) {
    MODE.store(if mode == ExecMode::Sequential { 1 } else { 0 }, Ordering::Relaxed);
}

pub fn mode() -> ExecMode {
    if MODE.load(Ordering::Relaxed) == 1 {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    }
}

/// Thread cap from `NCIDIRAC_THREADS`; `None` when unset or invalid.
pub fn thread_cap() -> Option<usize> {
    std::env::var("NCIDIRAC_THREADS").ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)
}

#[cfg(feature = "parallel")]
fn pool() -> Option<&'static rayon::ThreadPool> {
    use std::sync::OnceLock;
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| thread_cap().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok())).as_ref()
}

/// `items.iter().map(f).collect()` with results in input order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_with(mode(), items, f)
}

pub fn map_with<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        ExecMode::Parallel => parallel_map(items, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if thread_cap() == Some(1) {
        return items.iter().map(f).collect();
    }
    match pool() {
        Some(p) => p.install(|| items.par_iter().map(&f).collect()),
        None => items.par_iter().map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let xs: Vec<u64> = (0..200).collect();
        let a = map_with(ExecMode::Parallel, &xs, |x| x * x + 1);
        let b = map_with(ExecMode::Sequential, &xs, |x| x * x + 1);
        assert_eq!(a, b);
        assert_eq!(a[17], 290);
    }
}
