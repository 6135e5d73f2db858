//! The `vocada` pipeline: caption, extract noun phrases, adapt each image's
//! vocabulary, rescore proposals and evaluate.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod stages;

pub use config::{Overrides, Paths, RunConfig};
pub use error::{CliError, CliResult};
