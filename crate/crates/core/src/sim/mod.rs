//! Closed-loop braking scenarios: scene rendering, kinematics, detector
//! timing and the event loop that wires the nodes together.

mod calibration;
pub mod config;
mod dataset;
mod exec_time;
mod kinematics;
mod oracle;
pub mod realtime;
pub mod render;
mod scenario;

use thiserror::Error;

pub use calibration::{
    base_scorer, build_scorer, calibrate, calibrate_from_kl, calibration_frames,
    calibration_positions, score_calibration_frames, Calibration, ScorerWithConfig,
};
pub use config::{
    DetectorSettings, ExecTimeModel, HopLatencies, ObstacleKind, ScenarioConfig, ScorerKind,
};
pub use dataset::{
    campaign_configs, read_dataset_index, render_dataset, run_campaign, DatasetEntry,
};
pub use exec_time::{sample_exec_time, ExecTimeSampler};
pub use kinematics::{step_kinematics, Odometer, VehicleState};
pub use oracle::{oracle_score, OracleScorer};
pub use render::{obstacle_fraction, obstacle_mask, render_frame, render_frame_seeded};
pub use scenario::{
    run_scenario, run_scenario_with, tick_time_ns, EndReason, FrameRecord, MotionSample, Outcome,
    RunLog, RunSummary, SteeringRecord, TOPIC_CAMERA, TOPIC_ESTOP, TOPIC_MOTOR, TOPIC_OOD,
    TOPIC_STEERING,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("render: {0}")]
    Render(String),
    #[error("run log: {0}")]
    Log(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Bus(#[from] crate::bus::BusError),
    #[error(transparent)]
    Ood(#[from] crate::ood::OodError),
    #[error(transparent)]
    Vision(#[from] crate::vision::VisionError),
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Independent stream seed derived from a base seed and a stream label.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
