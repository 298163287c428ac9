//! Benchmark runner: TOML run configurations, the simulation and
//! evaluation pipeline, and the artifacts it writes.

pub mod config;
pub mod pipeline;

pub use config::{Mode, RunConfig, Specimen};
pub use pipeline::{run, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config field `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Core(#[from] vnotch::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
