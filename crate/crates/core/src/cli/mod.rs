//! Experiment sweeps, configuration, text file formats and result output
//! behind the `sfmc` command-line tool.

pub mod config;
pub mod experiment;
pub mod io;
pub mod output;

pub use config::{ExperimentConfig, Method, Preset};
pub use experiment::{estimate_slope, run_experiment, ExperimentOutcome, ResultRow, SummaryRow};
pub use output::emit_outputs;
