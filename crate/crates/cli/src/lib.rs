//! Experiment runners and file plumbing behind the `wearlab` binary.

pub mod config;
pub mod experiments;
pub mod report;
pub mod simulate;

pub use config::RunConfig;
pub use experiments::{run_experiment, Outcome, EXPERIMENTS};
