//! Batch pipeline around `smspace`: seeded exploration, distance matrix,
//! embedding, analysis and the toy agents, with artifacts in a run directory.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod run_dir;

pub use config::{ExperimentConfig, Stage};
pub use error::{CliError, CliResult};
pub use run_dir::RunDir;

/// Runs `f` on a pool of `workers` threads (all available when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = workers {
            builder = builder.num_threads(w);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        if workers.is_some_and(|w| w > 1) {
            eprintln!("built without the `parallel` feature; running on one worker");
        }
        Ok(f())
    }
}
