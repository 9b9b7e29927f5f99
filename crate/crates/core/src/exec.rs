//! Sample-level parallelism.
//!
//! Work items are indexed; results always come back in index order, so
//! downstream reductions are sequential and bitwise independent of the number
//! of workers. Without the `parallel` feature everything runs on the calling
//! thread.

/// How to evaluate a batch of independent samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon's global pool (or the pool installed by [`with_workers`]).
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` degrades to `Sequential` when the feature is disabled.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

pub fn map_indexed<T, F>(exec: Execution, range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => range.map(f).collect(),
        Execution::Parallel => par_map(range, f),
    }
}

/// Like [`map_indexed`], stopping at the lowest-index error.
pub fn try_map_indexed<T, E, F>(exec: Execution, range: std::ops::Range<u64>, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, range, f).into_iter().collect()
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    range.map(f).collect()
}

/// Runs `f` inside a dedicated pool of `workers` threads (`None` = default pool).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(Execution::Sequential, 0..1000, |i| i * i);
        let par = with_workers(Some(3), || map_indexed(Execution::Parallel, 0..1000, |i| i * i));
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<u64>, u64> =
            try_map_indexed(Execution::Parallel, 0..100, |i| if i % 30 == 29 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(29));
    }
}
