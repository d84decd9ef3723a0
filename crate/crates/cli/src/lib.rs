//! The `radvid` pipeline driver: configuration, artifact cache, run log and
//! the `generate`, `storyboard` and `stage` commands.

pub mod cache;
pub mod cli;
pub mod config;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod runlog;

pub use config::PipelineConfig;
pub use error::{CliError, ErrorRecord};
pub use pipeline::{GenerateOutcome, Pipeline, StageName};
