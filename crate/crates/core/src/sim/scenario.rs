//! Discrete-event execution of one braking run on a virtual clock.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ObstacleKind, ScenarioConfig};
use super::exec_time::ExecTimeSampler;
use super::kinematics::Odometer;
use super::render::render_frame;
use super::{build_scorer, derive_seed, SimError};
use crate::bus::{Bus, Subscriber, TopicHandle, TopicPolicy};
use crate::clock::{secs_to_ns, Clock, VirtualClock, NANOS_PER_SEC};
use crate::control::{EStopLatch, MotorController};
use crate::frame::Frame;
use crate::ood::{score_frame, DetectorConfig, OodResult, Scorer};
use crate::runlog::{HopEvent, HopLog, Stage};
use crate::vision::{Confidence, LaneFollower};

pub const TOPIC_CAMERA: &str = "camera";
pub const TOPIC_OOD: &str = "ood";
pub const TOPIC_ESTOP: &str = "estop";
pub const TOPIC_STEERING: &str = "steering";
pub const TOPIC_MOTOR: &str = "motor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub seq: u64,
    pub capture_ns: u64,
    pub publish_ns: u64,
    /// Ground-truth vehicle position at capture.
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub t_ns: u64,
    pub x: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringRecord {
    pub t_ns: u64,
    pub seq: u64,
    pub raw_deg: f64,
    pub smoothed_deg: f64,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Stopped,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub end_reason: EndReason,
    pub end_ns: u64,
    /// Position when the motors were zeroed (or the run ended otherwise).
    pub x_at_stop: f64,
    /// Resting position after coasting.
    pub x_final: f64,
    /// `d_obs - x_final`; absent when no obstacle is placed.
    pub stopping_distance: Option<f64>,
    pub collision: bool,
    pub estop_ns: Option<u64>,
    pub trigger_seq: Option<u64>,
    pub frames_scored: usize,
    pub velocity_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: ScenarioConfig,
    pub detector: DetectorConfig,
    pub hops: Vec<HopEvent>,
    pub frames: Vec<FrameRecord>,
    pub ood: Vec<OodResult>,
    pub motion: Vec<MotionSample>,
    pub steering: Vec<SteeringRecord>,
    pub outcome: Outcome,
}

impl RunLog {
    pub fn frame(&self, seq: u64) -> Option<&FrameRecord> {
        // Frames are numbered from 1 in publish order.
        self.frames
            .get(seq.wrapping_sub(1) as usize)
            .filter(|f| f.seq == seq)
            .or_else(|| self.frames.iter().find(|f| f.seq == seq))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run logs serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        serde_json::from_str(s).map_err(|e| SimError::Log(e.to_string()))
    }
}

/// One line of `summary.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub obstacle: ObstacleKind,
    pub stopping_distance: Option<f64>,
    pub collision: bool,
    pub velocity_estimate: Option<f64>,
    pub frames_scored: usize,
    pub end_reason: EndReason,
    pub threshold: f64,
}

impl RunSummary {
    pub fn from_log(run: usize, log: &RunLog) -> Self {
        Self {
            run,
            seed: log.config.seed,
            obstacle: log.config.obstacle,
            stopping_distance: log.outcome.stopping_distance,
            collision: log.outcome.collision,
            velocity_estimate: log.outcome.velocity_estimate,
            frames_scored: log.outcome.frames_scored,
            end_reason: log.outcome.end_reason,
            threshold: log.detector.threshold,
        }
    }
}

#[derive(Debug)]
enum Event {
    Collision { generation: u64 },
    EStopArrive { seq: u64 },
    EStopSend { seq: u64 },
    Publish { frame: Frame },
    Capture { k: u64 },
    SteeringArrive { angle: f64 },
    DetectorDone { result: OodResult },
    LaneTick { k: u64 },
    Timeout,
}

impl Event {
    /// Order among events due at the same instant. Publishing precedes the
    /// detector finishing so that a frame arriving exactly at completion is
    /// the one taken next.
    fn rank(&self) -> u8 {
        match self {
            Event::Collision { .. } => 0,
            Event::EStopArrive { .. } => 1,
            Event::EStopSend { .. } => 2,
            Event::Publish { .. } => 3,
            Event::Capture { .. } => 4,
            Event::SteeringArrive { .. } => 5,
            Event::DetectorDone { .. } => 6,
            Event::LaneTick { .. } => 7,
            Event::Timeout => 8,
        }
    }
}

struct Scheduled {
    t_ns: u64,
    rank: u8,
    order: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.t_ns, other.rank, other.order).cmp(&(self.t_ns, self.rank, self.order))
    }
}

/// Capture instant of camera frame `k` (0-based) at `rate_hz`.
pub fn tick_time_ns(k: u64, rate_hz: f64) -> u64 {
    (k as f64 * NANOS_PER_SEC as f64 / rate_hz).round() as u64
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    scorer: &'a dyn Scorer,
    clock: Arc<VirtualClock>,
    queue: BinaryHeap<Scheduled>,
    order: u64,
    frames_bus: Bus<Frame>,
    camera: TopicHandle,
    detector_in: Subscriber<Frame>,
    lane_in: Subscriber<Frame>,
    ood_bus: Bus<OodResult>,
    ood_topic: TopicHandle,
    estop_bus: Bus<u64>,
    estop_topic: TopicHandle,
    steering_bus: Bus<f64>,
    steering_topic: TopicHandle,
    sampler: ExecTimeSampler,
    follower: LaneFollower,
    motor: MotorController,
    odo: Odometer,
    collision_generation: u64,
    detector_busy: bool,
    hops: HopLog,
    frames: Vec<FrameRecord>,
    ood: Vec<OodResult>,
    motion: Vec<MotionSample>,
    steering: Vec<SteeringRecord>,
    outcome: Option<Outcome>,
    latencies: [u64; 4],
    max_ns: u64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig, scorer: &'a dyn Scorer) -> Result<Self, SimError> {
        let clock = Arc::new(VirtualClock::new());
        let dyn_clock: Arc<dyn Clock> = clock.clone();
        let frames_bus = Bus::new(dyn_clock.clone());
        let camera = frames_bus.create_topic(TOPIC_CAMERA, TopicPolicy::Latest)?;
        let detector_in = frames_bus.subscribe(&camera)?;
        let lane_in = frames_bus.subscribe(&camera)?;
        let ood_bus = Bus::new(dyn_clock.clone());
        let ood_topic = ood_bus.create_topic(TOPIC_OOD, TopicPolicy::Queue(8))?;
        let estop_bus = Bus::new(dyn_clock.clone());
        let estop_topic = estop_bus.create_topic(TOPIC_ESTOP, TopicPolicy::Queue(8))?;
        let steering_bus = Bus::new(dyn_clock);
        let steering_topic = steering_bus.create_topic(TOPIC_STEERING, TopicPolicy::Queue(8))?;
        let l = &cfg.latency;
        Ok(Self {
            cfg,
            scorer,
            clock,
            queue: BinaryHeap::new(),
            order: 0,
            frames_bus,
            camera,
            detector_in,
            lane_in,
            ood_bus,
            ood_topic,
            estop_bus,
            estop_topic,
            steering_bus,
            steering_topic,
            sampler: ExecTimeSampler::new(cfg.exec_time.clone(), derive_seed(cfg.seed, 0xE8EC))?,
            follower: LaneFollower::new(cfg.vision),
            motor: MotorController::new(cfg.control, Arc::new(EStopLatch::new()))?,
            odo: Odometer::new(cfg.speed),
            collision_generation: 0,
            detector_busy: false,
            hops: HopLog::new(),
            frames: Vec::new(),
            ood: Vec::new(),
            motion: Vec::new(),
            steering: Vec::new(),
            outcome: None,
            latencies: [
                secs_to_ns(l.capture_to_publish),
                secs_to_ns(l.detect_to_estop),
                secs_to_ns(l.estop_to_motor),
                secs_to_ns(l.steering_to_motor),
            ],
            max_ns: secs_to_ns(cfg.max_duration),
        })
    }

    fn schedule(&mut self, t_ns: u64, event: Event) {
        self.order += 1;
        self.queue.push(Scheduled {
            t_ns,
            rank: event.rank(),
            order: self.order,
            event,
        });
    }

    fn schedule_collision(&mut self) {
        self.collision_generation += 1;
        if self.cfg.obstacle == ObstacleKind::None {
            return;
        }
        if let Some(t) = self.odo.time_to_reach(self.cfg.obstacle_distance) {
            self.schedule(
                t,
                Event::Collision {
                    generation: self.collision_generation,
                },
            );
        }
    }

    fn finish(&mut self, reason: EndReason, t_ns: u64, x_at_stop: f64, x_final: f64) {
        let has_obstacle = self.cfg.obstacle != ObstacleKind::None;
        let stopping_distance =
            has_obstacle.then(|| (self.cfg.obstacle_distance - x_final).max(0.0));
        self.outcome = Some(Outcome {
            end_reason: reason,
            end_ns: t_ns,
            x_at_stop,
            x_final,
            stopping_distance,
            collision: stopping_distance.is_some_and(|d| d <= 0.0),
            estop_ns: self.motor.latch().latched_at(),
            trigger_seq: None,
            frames_scored: self.ood.len(),
            velocity_estimate: None,
        });
    }

    fn run(
        mut self,
    ) -> Result<
        (
            Vec<HopEvent>,
            Vec<FrameRecord>,
            Vec<OodResult>,
            Vec<MotionSample>,
            Vec<SteeringRecord>,
            Outcome,
        ),
        SimError,
    > {
        let v = self.cfg.speed;
        let first = self.motor.wheel_command(v, 0.0, 0);
        self.odo.set_speed(0, first.forward_speed());
        self.motion.push(MotionSample {
            t_ns: 0,
            x: 0.0,
            speed: self.odo.speed(),
        });
        self.schedule_collision();
        self.schedule(0, Event::Capture { k: 0 });
        self.schedule(0, Event::LaneTick { k: 0 });
        self.schedule(self.max_ns, Event::Timeout);
        let mut trigger_seq = None;

        while let Some(Scheduled { t_ns: t, event, .. }) = self.queue.pop() {
            if self.outcome.is_some() {
                break;
            }
            self.clock.advance_to(t);
            match event {
                Event::Capture { k } => {
                    let seq = k + 1;
                    let x = self.odo.position_at(t);
                    self.hops.record(seq, TOPIC_CAMERA, Stage::Capture, t)?;
                    let frame = Frame {
                        seq,
                        capture_ns: t,
                        vehicle_x: Some(x),
                        image: None,
                    };
                    self.schedule(t + self.latencies[0], Event::Publish { frame });
                    let next = tick_time_ns(k + 1, self.cfg.camera_rate_hz);
                    if next <= self.max_ns {
                        self.schedule(next, Event::Capture { k: k + 1 });
                    }
                }
                Event::Publish { frame } => {
                    let (seq, capture_ns, x) =
                        (frame.seq, frame.capture_ns, frame.vehicle_x.unwrap_or(0.0));
                    let bus_seq = self.frames_bus.publish(&self.camera, frame, capture_ns)?;
                    debug_assert_eq!(bus_seq, seq);
                    self.frames.push(FrameRecord {
                        seq,
                        capture_ns,
                        publish_ns: t,
                        x,
                    });
                    if !self.detector_busy {
                        self.start_detection(t)?;
                    }
                }
                Event::DetectorDone { result } => {
                    self.hops
                        .record(result.seq, TOPIC_OOD, Stage::DetectDone, t)?;
                    self.ood_bus.publish(&self.ood_topic, result.clone(), t)?;
                    if result.flagged {
                        self.schedule(t + self.latencies[1], Event::EStopSend { seq: result.seq });
                    }
                    self.ood.push(result);
                    self.detector_busy = false;
                    self.start_detection(t)?;
                }
                Event::EStopSend { seq } => {
                    self.hops.record(seq, TOPIC_ESTOP, Stage::EstopSent, t)?;
                    self.estop_bus.publish(&self.estop_topic, seq, t)?;
                    self.schedule(t + self.latencies[2], Event::EStopArrive { seq });
                }
                Event::EStopArrive { seq } => {
                    if self.motor.latch().is_latched() {
                        continue;
                    }
                    self.motor.engage_estop(t);
                    let x = self.odo.advance_to(t);
                    let stop = self.motor.wheel_command(v, 0.0, t);
                    self.odo.set_speed(t, stop.forward_speed());
                    self.hops.record(seq, TOPIC_MOTOR, Stage::MotorZeroed, t)?;
                    self.motion.push(MotionSample {
                        t_ns: t,
                        x,
                        speed: 0.0,
                    });
                    trigger_seq = Some(seq);
                    let mut x_final = x + self.cfg.coast_distance;
                    if self.cfg.obstacle != ObstacleKind::None {
                        x_final = x_final.min(self.cfg.obstacle_distance);
                    }
                    self.odo.set_x(x_final);
                    self.finish(EndReason::Stopped, t, x, x_final);
                }
                Event::LaneTick { k } => {
                    if self.cfg.lane_following {
                        self.lane_step(t)?;
                    }
                    let next = tick_time_ns(k + 1, self.cfg.lane_rate_hz);
                    if next <= self.max_ns {
                        self.schedule(next, Event::LaneTick { k: k + 1 });
                    }
                }
                Event::SteeringArrive { angle } => {
                    let cmd = self.motor.on_steering(angle, v, t)?;
                    let before = self.odo.speed();
                    self.odo.set_speed(t, cmd.forward_speed());
                    if self.odo.speed() != before {
                        self.motion.push(MotionSample {
                            t_ns: t,
                            x: self.odo.x(),
                            speed: self.odo.speed(),
                        });
                        self.schedule_collision();
                    }
                }
                Event::Collision { generation } => {
                    if generation != self.collision_generation {
                        continue;
                    }
                    self.odo.advance_to(t);
                    let d = self.cfg.obstacle_distance;
                    self.odo.set_x(d);
                    self.motion.push(MotionSample {
                        t_ns: t,
                        x: d,
                        speed: 0.0,
                    });
                    self.finish(EndReason::Collision, t, d, d);
                }
                Event::Timeout => {
                    let x = self.odo.advance_to(t);
                    self.motion.push(MotionSample {
                        t_ns: t,
                        x,
                        speed: self.odo.speed(),
                    });
                    self.finish(EndReason::Timeout, t, x, x);
                }
            }
        }
        let mut outcome = self.outcome.take().ok_or_else(|| {
            SimError::Invariant("event queue drained before the run ended".into())
        })?;
        outcome.trigger_seq = trigger_seq;
        Ok((
            self.hops.into_events(),
            self.frames,
            self.ood,
            self.motion,
            self.steering,
            outcome,
        ))
    }

    fn start_detection(&mut self, t: u64) -> Result<(), SimError> {
        let Some(env) = self.detector_in.take_latest() else {
            return Ok(());
        };
        let mut frame = env.payload;
        self.hops
            .record(frame.seq, TOPIC_CAMERA, Stage::Ingest, t)?;
        if self.scorer.needs_image() && frame.image.is_none() {
            let x = frame.vehicle_x.unwrap_or(0.0);
            frame.image = Some(Arc::new(render_frame(self.cfg, x)?));
        }
        let mut result = score_frame(self.scorer, &frame, self.clock.as_ref())?;
        let exec = secs_to_ns(self.sampler.sample()).max(1);
        result.complete_ns = t + exec;
        self.detector_busy = true;
        self.schedule(t + exec, Event::DetectorDone { result });
        Ok(())
    }

    fn lane_step(&mut self, t: u64) -> Result<(), SimError> {
        let Some(env) = self.lane_in.take_latest() else {
            return Ok(());
        };
        let x = env.payload.vehicle_x.unwrap_or(0.0);
        let image = match env.payload.image {
            Some(img) => img,
            None => Arc::new(render_frame(self.cfg, x)?),
        };
        let (raw, smoothed) = self.follower.process(&image)?;
        self.steering.push(SteeringRecord {
            t_ns: t,
            seq: env.seq,
            raw_deg: raw.angle_deg,
            smoothed_deg: smoothed,
            confidence: raw.confidence,
        });
        self.steering_bus
            .publish(&self.steering_topic, smoothed, t)?;
        self.schedule(
            t + self.latencies[3],
            Event::SteeringArrive { angle: smoothed },
        );
        Ok(())
    }
}

/// Runs a scenario with an explicitly supplied (already calibrated) scorer.
pub fn run_scenario_with(cfg: &ScenarioConfig, scorer: &dyn Scorer) -> Result<RunLog, SimError> {
    cfg.validate()?;
    let (hops, frames, ood, motion, steering, outcome) = Engine::new(cfg, scorer)?.run()?;
    let mut log = RunLog {
        config: cfg.clone(),
        detector: scorer.config().clone(),
        hops,
        frames,
        ood,
        motion,
        steering,
        outcome,
    };
    log.outcome.velocity_estimate = crate::analysis::velocity_estimate(&log).ok();
    Ok(log)
}

/// Calibrates the configured scorer (unless the threshold is pinned) and runs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog, SimError> {
    cfg.validate()?;
    let scorer = build_scorer(cfg)?;
    run_scenario_with(cfg, scorer.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::ExecTimeModel;

    fn quiet(cfg: ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            lane_following: false,
            ..cfg
        }
    }

    #[test]
    fn default_run_stops_before_obstacle() {
        let log = run_scenario(&ScenarioConfig::default()).unwrap();
        assert_eq!(log.outcome.end_reason, EndReason::Stopped);
        assert!(!log.outcome.collision);
        let d = log.outcome.stopping_distance.unwrap();
        assert!(d > 0.0 && d < 0.6, "{d}");
        assert!(log.outcome.frames_scored >= 2);
        assert!(!log.steering.is_empty());
        let v = log.outcome.velocity_estimate.unwrap();
        assert!((v - 0.2).abs() < 1e-3, "{v}");
    }

    #[test]
    fn unreachable_threshold_collides() {
        let mut cfg = quiet(ScenarioConfig::default());
        cfg.detector.threshold = Some(1e9);
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.outcome.end_reason, EndReason::Collision);
        assert_eq!(log.outcome.stopping_distance, Some(0.0));
        assert!(log.outcome.collision);
        assert_eq!(log.outcome.end_ns, 3_500_000_000);
    }

    #[test]
    fn no_obstacle_runs_to_timeout() {
        let cfg = quiet(ScenarioConfig {
            obstacle: ObstacleKind::None,
            max_duration: 2.0,
            exec_time: ExecTimeModel::Constant { seconds: 0.2 },
            ..ScenarioConfig::default()
        });
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.outcome.end_reason, EndReason::Timeout);
        assert_eq!(log.outcome.stopping_distance, None);
        assert!(!log.outcome.collision);
        assert!(log.ood.iter().all(|r| !r.flagged));
    }

    #[test]
    fn coast_is_added_after_stop() {
        let mut cfg = quiet(ScenarioConfig::default());
        cfg.coast_distance = 0.03;
        let log = run_scenario(&cfg).unwrap();
        let o = &log.outcome;
        assert!((o.x_final - o.x_at_stop - 0.03).abs() < 1e-12);
    }

    #[test]
    fn tick_times() {
        assert_eq!(tick_time_ns(0, 30.0), 0);
        assert_eq!(tick_time_ns(1, 30.0), 33_333_333);
        assert_eq!(tick_time_ns(2, 30.0), 66_666_667);
        assert_eq!(tick_time_ns(15, 30.0), 500_000_000);
    }
}
