//! Ordered data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over rayon; without
//! it, or with a single worker, everything runs on the calling thread.
//! Output order always equals input order.

/// Runs ordered maps either sequentially or on a rayon pool.
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    parallel: bool,
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            #[cfg(feature = "parallel")]
            pool: None,
            parallel: false,
        }
    }

    /// `None` uses rayon's global pool, `Some(1)` runs sequentially, and
    /// `Some(n)` gets a dedicated pool of `n` threads. Without the
    /// `parallel` feature every setting is sequential.
    pub fn new(workers: Option<usize>) -> Self {
        #[cfg(feature = "parallel")]
        {
            match workers {
                Some(0) | Some(1) => Executor::sequential(),
                None => Executor {
                    pool: None,
                    parallel: true,
                },
                Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => Executor {
                        pool: Some(pool),
                        parallel: true,
                    },
                    Err(_) => Executor::sequential(),
                },
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = workers;
            Executor::sequential()
        }
    }

    pub fn is_parallel(&self) -> bool {
        self.parallel
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel {
            use rayon::prelude::*;
            let run = || items.par_iter().with_min_len(256).map(&f).collect();
            return match &self.pool {
                Some(pool) => pool.install(run),
                None => run(),
            };
        }
        items.iter().map(f).collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::new(None)
    }
}
