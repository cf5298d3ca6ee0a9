//! Execution strategy for the data-parallel loops (smoothing columns, the
//! GCV grid, Monte Carlo replicates).
//!
//! With the `parallel` feature (default) the `Parallel` strategy fans work
//! out on the rayon thread pool; without it every strategy degrades to a
//! plain sequential loop, so the crate builds and behaves identically minus
//! the threads.

/// How to run an embarrassingly parallel batch of independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// Plain iterator loop on the calling thread.
    Sequential,
    /// Rayon work-stealing pool (falls back to sequential without the
    /// `parallel` feature).
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Map `f` over `0..count`, preserving index order in the output.
pub fn map_indexed<R, F>(exec: Execution, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..count).map(f).collect(),
        Execution::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..count).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..count).map(f).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let out = map_indexed(exec, 100, |i| i * i);
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }
}
