//! Sequential or data-parallel execution of independent work items.

use serde::{Deserialize, Serialize};

/// How independent work items are scheduled.
///
/// Results are always collected in item order, so both modes produce
/// identical output. Without the `parallel` feature `Parallel` runs
/// sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `f(i)` for every `i` in `range`, in order.
    pub fn map_range<T, F>(self, range: std::ops::Range<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                range.into_par_iter().map(f).collect()
            }
            _ => range.map(f).collect(),
        }
    }

    /// `f` over a slice, results in slice order.
    pub fn map_slice<'a, S, T, F>(self, items: &'a [S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&'a S) -> T + Sync + Send,
    {
        self.map_range(0..items.len(), |i| f(&items[i]))
    }
}

/// Runs `f` with data-parallel work limited to `workers` threads (0 keeps
/// the global pool). Sequential builds just call `f`.
pub fn with_workers<T, F>(workers: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}
