//! Data-parallel mapping over independent runs.
//!
//! With the `parallel` feature, `Execution::Parallel` fans work out over a
//! rayon pool; without it every strategy runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// rayon global pool.
    #[default]
    Parallel,
    ParallelWith { threads: usize },
}

impl Execution {
    /// Parallel execution bounded by `SOLITON_THREADS` when it is set to a positive integer.
    pub fn from_env() -> Self {
        match std::env::var("SOLITON_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            Some(0) | None => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(threads) => Execution::ParallelWith { threads },
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }
}

/// `items.iter().map(f)` under the chosen strategy; output order matches input order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        Execution::Parallel => par_map(items, f),
        Execution::ParallelWith { threads } => par_map_with(threads, items, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, R: Send, F: Fn(&T) -> R + Sync + Send>(items: &[T], f: F) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_with<T: Sync, R: Send, F: Fn(&T) -> R + Sync + Send>(threads: usize, items: &[T], f: F) -> Vec<R> {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| par_map(items, f)),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            par_map(items, f)
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, R: Send, F: Fn(&T) -> R + Sync + Send>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_with<T: Sync, R: Send, F: Fn(&T) -> R + Sync + Send>(_threads: usize, items: &[T], f: F) -> Vec<R> {
    par_map(items, f)
}
