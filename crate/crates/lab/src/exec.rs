//! Rayon-backed trial executor.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use rdl_core::mc::Executor;

/// Parallel [`Executor`]. Results come back in index order, so every
/// reduction downstream sees the same sequence whatever the thread count.
pub struct Parallel {
    pool: Option<ThreadPool>,
}

impl Parallel {
    /// `threads == 0` uses the global pool.
    pub fn new(threads: usize) -> std::io::Result<Self> {
        if threads == 0 {
            return Ok(Self { pool: None });
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(Self { pool: Some(pool) })
    }

    pub fn threads(&self) -> usize {
        match &self.pool {
            Some(p) => p.current_num_threads(),
            None => rayon::current_num_threads(),
        }
    }
}

impl Executor for Parallel {
    fn map_range<T, F>(&self, start: u64, end: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        let run = || (start..end).into_par_iter().map(&f).collect();
        match &self.pool {
            Some(p) => p.install(run),
            None => run(),
        }
    }
}
