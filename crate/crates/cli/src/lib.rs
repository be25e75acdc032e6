//! Command-line front end: study configs, runs and worker processes.

pub mod config;
pub mod run;

pub use config::{StudyConfig, TransportConfig, TransportKind};
pub use run::{execute, run, RunOptions, RunOutcome};
