//! Experiment harness for the `lca-core` simulator: configuration, file
//! formats, the experiment runners and the command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{LabError, LabResult};
