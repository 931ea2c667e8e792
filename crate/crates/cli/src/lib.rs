//! Experiment runner: configuration, corrector cache, canned experiments and
//! report emission.

pub mod boundary;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiments::RunContext;
