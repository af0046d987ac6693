//! Experiment runner for t-exponential expectation propagation: dataset
//! generation, BPM/StP/GP fits, permutation and outlier-robustness metrics,
//! classical-limit cross-checks, and CSV/JSON exports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use experiments::{run, Outcome};
