//! Command-line front end for `satrecon`: one subcommand per pipeline stage,
//! a TOML run configuration, format converters and a synthetic-scene
//! generator for self-contained runs.

pub mod commands;
pub mod config;
pub mod convert;
pub mod error;
pub mod pipeline;
pub mod synth;

pub use commands::run;
pub use config::PipelineConfig;
pub use error::{CliError, Result};
