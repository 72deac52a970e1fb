//! Replays recorded score traces under alternative thresholds.
//!
//! For a threshold `tau` the trigger is the first scored frame (in completion
//! order) whose score exceeds `tau`. The stop position is projected with the
//! run's velocity estimate from the first motion to the moment that frame's
//! detection completes, plus the run's own detection-to-motor latency and
//! the configured coast. A run without a trigger is a projected collision.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{velocity_estimate, AnalysisError};
use crate::clock::secs_to_ns;
use crate::runlog::Stage;
use crate::sim::RunLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProjection {
    pub distance: f64,
    pub trigger_seq: Option<u64>,
    /// Trigger frame captured before entering the risk zone.
    pub early_trigger: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub runs: Vec<RunProjection>,
    pub collisions: usize,
    /// Projected stops that end outside the risk zone.
    pub stops_outside_zone: usize,
    /// Runs whose trigger frame was captured outside the risk zone.
    pub early_triggers: usize,
    pub median_distance: f64,
}

impl SweepRow {
    pub fn distances(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.distance).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

struct RunModel<'a> {
    log: &'a RunLog,
    v_hat: f64,
    t0_ns: u64,
    detect_to_motor_ns: u64,
}

impl<'a> RunModel<'a> {
    fn new(log: &'a RunLog) -> Result<Self, AnalysisError> {
        let v_hat = log
            .outcome
            .velocity_estimate
            .map_or_else(|| velocity_estimate(log), Ok)?;
        let t0_ns = log
            .motion
            .iter()
            .find(|m| m.speed > 0.0)
            .map(|m| m.t_ns)
            .ok_or(AnalysisError::NoMotion)?;
        let recorded = log.outcome.trigger_seq.and_then(|seq| {
            let done = log
                .hops
                .iter()
                .find(|h| h.seq == seq && h.stage == Stage::DetectDone)?;
            let motor = log
                .hops
                .iter()
                .find(|h| h.seq == seq && h.stage == Stage::MotorZeroed)?;
            motor.t_ns.checked_sub(done.t_ns)
        });
        let l = &log.config.latency;
        let detect_to_motor_ns = recorded
            .unwrap_or_else(|| secs_to_ns(l.detect_to_estop) + secs_to_ns(l.estop_to_motor));
        Ok(Self {
            log,
            v_hat,
            t0_ns,
            detect_to_motor_ns,
        })
    }

    fn project(&self, tau: f64) -> RunProjection {
        let cfg = &self.log.config;
        let d_obs = cfg.obstacle_distance;
        let Some(hit) = self.log.ood.iter().find(|r| r.score > tau) else {
            return RunProjection {
                distance: 0.0,
                trigger_seq: None,
                early_trigger: false,
            };
        };
        let t_stop = hit.complete_ns + self.detect_to_motor_ns;
        let travelled = self.v_hat * (t_stop.saturating_sub(self.t0_ns)) as f64 * 1e-9;
        let position = (travelled + cfg.coast_distance).min(d_obs);
        let capture_x = self.log.frame(hit.seq).map_or(0.0, |f| f.x);
        RunProjection {
            distance: (d_obs - position).max(0.0),
            trigger_seq: Some(hit.seq),
            early_trigger: capture_x < d_obs - cfg.risk_zone,
        }
    }
}

pub fn threshold_sweep(logs: &[RunLog], thresholds: &[f64]) -> Result<SweepResult, AnalysisError> {
    if thresholds.is_empty() {
        return Err(AnalysisError::NoThresholds);
    }
    if logs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if let Some(&bad) = thresholds.iter().find(|t| !t.is_finite()) {
        return Err(AnalysisError::NonFinite(bad));
    }
    let models = logs
        .iter()
        .map(RunModel::new)
        .collect::<Result<Vec<_>, _>>()?;
    let rows = thresholds
        .iter()
        .map(|&tau| {
            let runs: Vec<RunProjection> = models.iter().map(|m| m.project(tau)).collect();
            let collisions = runs.iter().filter(|r| r.distance <= 0.0).count();
            let stops_outside_zone = runs
                .iter()
                .zip(logs)
                .filter(|(r, l)| r.distance > l.config.risk_zone)
                .count();
            let early_triggers = runs.iter().filter(|r| r.early_trigger).count();
            let distances: Vec<f64> = runs.iter().map(|r| r.distance).collect();
            Ok(SweepRow {
                threshold: tau,
                median_distance: super::median(&distances)?,
                runs,
                collisions,
                stops_outside_zone,
                early_triggers,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let result = SweepResult { rows };
    check_monotone(&result)?;
    Ok(result)
}

/// Along increasing thresholds, no run may stop later than before and the
/// early-trigger count may not grow.
fn check_monotone(result: &SweepResult) -> Result<(), AnalysisError> {
    let mut order: Vec<&SweepRow> = result.rows.iter().collect();
    order.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    for pair in order.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        for (run, (a, b)) in lo.runs.iter().zip(&hi.runs).enumerate() {
            if b.distance > a.distance {
                return Err(AnalysisError::Invariant(format!(
                    "run {run}: distance grows from {} to {} as threshold rises {} -> {}",
                    a.distance, b.distance, lo.threshold, hi.threshold
                )));
            }
        }
        if hi.early_triggers > lo.early_triggers {
            return Err(AnalysisError::Invariant(format!(
                "early triggers grow from {} to {} as threshold rises",
                lo.early_triggers, hi.early_triggers
            )));
        }
    }
    Ok(())
}

/// `threshold,run,projected_distance,collision,trigger_seq` grid.
pub fn write_sweep_csv(result: &SweepResult, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "threshold,run,projected_distance,collision,trigger_seq")?;
    for row in &result.rows {
        for (run, p) in row.runs.iter().enumerate() {
            let seq = p.trigger_seq.map_or(String::new(), |s| s.to_string());
            writeln!(
                w,
                "{},{},{:.6},{},{}",
                row.threshold,
                run,
                p.distance,
                u8::from(p.distance <= 0.0),
                seq
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_scenario, ExecTimeModel, ScenarioConfig};

    fn log() -> RunLog {
        let cfg = ScenarioConfig {
            exec_time: ExecTimeModel::Constant { seconds: 0.3 },
            lane_following: false,
            ..ScenarioConfig::default()
        };
        run_scenario(&cfg).unwrap()
    }

    #[test]
    fn limits_and_self_consistency() {
        let log = log();
        let actual = log.detector.threshold;
        let res = threshold_sweep(std::slice::from_ref(&log), &[0.0, actual, 1e9]).unwrap();
        let first = &res.rows[0].runs[0];
        assert_eq!(first.trigger_seq, Some(log.ood[0].seq));
        assert!(first.early_trigger);
        let same = &res.rows[1].runs[0];
        let real = log.outcome.stopping_distance.unwrap();
        assert!(
            (same.distance - real).abs() < 1e-9,
            "{} vs {real}",
            same.distance
        );
        assert_eq!(res.rows[2].collisions, 1);
        assert!(threshold_sweep(&[log], &[]).is_err());
    }

    #[test]
    fn csv_grid() {
        let log = log();
        let res = threshold_sweep(&[log.clone(), log], &[0.0, 1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&res, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 6);
    }
}
