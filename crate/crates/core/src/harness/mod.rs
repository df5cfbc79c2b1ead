//! Experiment orchestration: configuration, single runs, sweeps and output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod sweep;

pub use config::{ExperimentConfig, Scenario};
pub use experiment::{build_initial, compute_tau_alpha, run_experiment, run_experiment_with, FrameRecord, RunRecord, RunStatus};
pub use sweep::{fit_log_log, run_scaling_sweep, SweepAxis, SweepMetric, SweepResult};
