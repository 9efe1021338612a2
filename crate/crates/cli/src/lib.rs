//! Batch orchestration of the gradebal pipeline from one JSON config.

pub mod commands;
pub mod config;
pub mod error;
pub mod fixture;
pub mod store;

pub use commands::{Command, Runner};
pub use config::RunConfig;
pub use error::CliError;

/// Worker count used when neither `--workers` nor `GRADEBAL_WORKERS` is set.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
