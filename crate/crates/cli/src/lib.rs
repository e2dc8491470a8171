//! Experiment harness for `delayembed`: configuration, subcommand dispatch,
//! result persistence and the acceptance battery.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use run::{run, RunOutput, Subcommand};
