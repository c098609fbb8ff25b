//! Configuration, end-to-end runs, sweeps and reports.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{DataSource, ExperimentConfig, NetworkConfig, TSource};
pub use report::{EstimatorSummary, ExperimentReport, MatrixError, StageReport, StageTiming};
pub use run::{corrected_loss, estimate_stage, prepare, run, train_network, PreparedData, RunOutcome};
pub use sweep::{mean_std, sweep, sweep_csv, SweepGrid, SweepRow, SWEEP_HEADER};
