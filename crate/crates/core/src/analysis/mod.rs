//! Batch statistics over finished runs.

mod io;
mod stats;
pub mod svg;
mod sweep;
mod timing;

use thiserror::Error;

pub use io::{read_run_logs, read_summaries, write_campaign, write_run, CampaignSummary, RunFiles};
pub use stats::{
    median, median_ci, stopping_stats, stopping_stats_from_logs, velocity_estimate, StoppingStats,
};
pub use sweep::{threshold_sweep, write_sweep_csv, RunProjection, SweepResult, SweepRow};
pub use timing::{
    timing_report, timing_report_from_events, HopSpec, StageSummary, TimingSummary, HOPS,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no data")]
    Empty,
    #[error("the run did not move before stopping")]
    NoMotion,
    #[error("stage `{0}` never appears in the logs")]
    MissingStage(String),
    #[error("threshold list is empty")]
    NoThresholds,
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("run {run} has no obstacle; stopping distance undefined")]
    NoObstacle { run: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unreadable log {path}: {reason}")]
    BadLog { path: String, reason: String },
    #[error(transparent)]
    Bus(#[from] crate::bus::BusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
