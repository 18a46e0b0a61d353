//! Execution strategy for the embarrassingly parallel loops (scenario
//! generation, per-scenario evaluation, oracle sweeps).
//!
//! Results are always collected in input order, so the strategy never
//! changes output.

/// How a batch of independent jobs is scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Use up to `jobs` worker threads; 0 means the rayon default.
    /// Without the `parallel` feature this degrades to sequential.
    Parallel {
        jobs: usize,
    },
    #[default]
    Auto,
}

impl Exec {
    pub fn with_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            Exec::Sequential
        } else {
            Exec::Parallel { jobs }
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Auto => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Exec::Parallel { jobs } => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    Err(e) => {
                        log::warn!("falling back to sequential execution: {e}");
                        items.iter().map(f).collect()
                    }
                }
            }
            #[cfg(not(feature = "parallel"))]
            Exec::Auto | Exec::Parallel { .. } => items.iter().map(f).collect(),
        }
    }
}
