//! Experiment harness behind the `detect` binary: configuration, the
//! Monte-Carlo driver, CSV output, and the self-test battery.

pub mod config;
pub mod csvout;
pub mod driver;
pub mod metrics;
pub mod selftest;

pub use config::{ConfigError, ExperimentConfig, Snr2Rule, SpectrumSource};
pub use driver::{run_experiment, ExperimentOutput, ResultRow};
