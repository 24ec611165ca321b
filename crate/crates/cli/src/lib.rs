//! Experiment runner behind the `hetflow` binary: JSON configurations in,
//! CSV series and JSON summaries out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Command, Options, Outcome, Status};
pub use config::ExperimentConfig;
pub use error::CliError;
