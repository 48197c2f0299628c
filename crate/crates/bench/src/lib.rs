//! Experiment harness for the Gradraker learner: configuration, accuracy
//! and regret protocols, runtime benchmarks and report output.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod patterns;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{BenchError, BenchResult};
