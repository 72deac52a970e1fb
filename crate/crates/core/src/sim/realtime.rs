//! Wall-clock execution: one thread per node, talking only through bus
//! topics and the e-stop latch. The vehicle itself (the plant) is shared
//! state owned by the simulation, not by any node.
//!
//! `time_scale` maps simulated seconds to wall seconds, so `0.1` runs ten
//! times faster than real time. Timing jitter makes these runs
//! non-deterministic; use the virtual-clock engine for reproducible results.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::config::{ObstacleKind, ScenarioConfig};
use super::exec_time::ExecTimeSampler;
use super::kinematics::Odometer;
use super::render::render_frame;
use super::scenario::{EndReason, FrameRecord, MotionSample, Outcome, RunLog, SteeringRecord};
use super::{
    derive_seed, SimError, TOPIC_CAMERA, TOPIC_ESTOP, TOPIC_MOTOR, TOPIC_OOD, TOPIC_STEERING,
};
use crate::bus::{Bus, TopicPolicy};
use crate::clock::{secs_to_ns, Clock};
use crate::control::{EStopLatch, MotorController};
use crate::frame::Frame;
use crate::ood::{score_frame, OodResult, Scorer};
use crate::runlog::{HopLog, Stage};
use crate::vision::LaneFollower;

/// Simulated time running at `1 / scale` times wall speed.
#[derive(Debug)]
pub struct ScaledClock {
    start: Instant,
    scale: f64,
}

impl ScaledClock {
    pub fn new(scale: f64) -> Self {
        Self {
            start: Instant::now(),
            scale,
        }
    }

    fn sleep_sim(&self, secs: f64) {
        thread::sleep(Duration::from_secs_f64((secs * self.scale).max(0.0)));
    }

    fn sleep_until(&self, t_ns: u64) {
        let now = self.now_ns();
        if t_ns > now {
            self.sleep_sim((t_ns - now) as f64 * 1e-9);
        }
    }
}

impl Clock for ScaledClock {
    fn now_ns(&self) -> u64 {
        (self.start.elapsed().as_nanos() as f64 / self.scale) as u64
    }
}

const POLL: f64 = 0.002;

type Shared<T> = Arc<Mutex<T>>;

fn shared<T>(v: T) -> Shared<T> {
    Arc::new(Mutex::new(v))
}

/// Runs the scenario in real time (scaled). Steering is applied but, as in
/// the virtual engine, does not change the longitudinal motion.
pub fn run_realtime(
    cfg: &ScenarioConfig,
    scorer: Arc<dyn Scorer>,
    time_scale: f64,
) -> Result<RunLog, SimError> {
    cfg.validate()?;
    if !(time_scale > 0.0 && time_scale.is_finite()) {
        return Err(SimError::Config("time scale must be > 0".into()));
    }
    let clock = Arc::new(ScaledClock::new(time_scale));
    let dyn_clock: Arc<dyn Clock> = clock.clone();
    let frames_bus = Arc::new(Bus::<Frame>::new(dyn_clock.clone()));
    let camera = frames_bus.create_topic(TOPIC_CAMERA, TopicPolicy::Latest)?;
    let detector_in = frames_bus.subscribe(&camera)?;
    let lane_in = frames_bus.subscribe(&camera)?;
    let ood_bus = Arc::new(Bus::<OodResult>::new(dyn_clock.clone()));
    let ood_topic = ood_bus.create_topic(TOPIC_OOD, TopicPolicy::Queue(8))?;
    let ood_log = ood_bus.subscribe(&ood_topic)?;
    let estop_bus = Arc::new(Bus::<u64>::new(dyn_clock.clone()));
    let estop_topic = estop_bus.create_topic(TOPIC_ESTOP, TopicPolicy::Queue(8))?;
    let estop_in = estop_bus.subscribe(&estop_topic)?;
    let steer_bus = Arc::new(Bus::<f64>::new(dyn_clock));
    let steer_topic = steer_bus.create_topic(TOPIC_STEERING, TopicPolicy::Queue(8))?;
    let steer_in = steer_bus.subscribe(&steer_topic)?;

    let latch = Arc::new(EStopLatch::new());
    let done = Arc::new(AtomicBool::new(false));
    let plant = shared(Odometer::new(cfg.speed));
    let hops = shared(HopLog::new());
    let frames = shared(Vec::<FrameRecord>::new());
    let steering = shared(Vec::<SteeringRecord>::new());
    let motion = shared(vec![MotionSample {
        t_ns: 0,
        x: 0.0,
        speed: cfg.speed,
    }]);
    let errors = shared(Vec::<String>::new());
    let stop_x = shared(None::<(u64, f64)>);

    let report = |errors: &Shared<Vec<String>>, done: &AtomicBool, e: SimError| {
        errors.lock().unwrap().push(e.to_string());
        done.store(true, Ordering::SeqCst);
    };

    thread::scope(|s| {
        // Camera node.
        s.spawn(|| {
            let mut k = 0u64;
            while !done.load(Ordering::SeqCst) {
                let t = super::tick_time_ns(k, cfg.camera_rate_hz);
                clock.sleep_until(t);
                let t = clock.now_ns();
                let x = plant.lock().unwrap().position_at(t);
                let seq = k + 1;
                if let Err(e) = hops
                    .lock()
                    .unwrap()
                    .record(seq, TOPIC_CAMERA, Stage::Capture, t)
                {
                    report(&errors, &done, e.into());
                    break;
                }
                clock.sleep_sim(cfg.latency.capture_to_publish);
                let frame = Frame {
                    seq,
                    capture_ns: t,
                    vehicle_x: Some(x),
                    image: None,
                };
                match frames_bus.publish(&camera, frame, t) {
                    Ok(_) => frames.lock().unwrap().push(FrameRecord {
                        seq,
                        capture_ns: t,
                        publish_ns: clock.now_ns(),
                        x,
                    }),
                    Err(e) => report(&errors, &done, e.into()),
                }
                k += 1;
            }
        });

        // Detector node.
        s.spawn(|| {
            let mut sampler =
                match ExecTimeSampler::new(cfg.exec_time.clone(), derive_seed(cfg.seed, 0xE8EC)) {
                    Ok(s) => s,
                    Err(e) => return report(&errors, &done, e),
                };
            while !done.load(Ordering::SeqCst) {
                let Some(env) = detector_in.take_latest() else {
                    clock.sleep_sim(POLL);
                    continue;
                };
                let mut frame = env.payload;
                let t_in = clock.now_ns();
                let step = (|| -> Result<(), SimError> {
                    hops.lock()
                        .unwrap()
                        .record(frame.seq, TOPIC_CAMERA, Stage::Ingest, t_in)?;
                    if scorer.needs_image() {
                        frame.image =
                            Some(Arc::new(render_frame(cfg, frame.vehicle_x.unwrap_or(0.0))?));
                    }
                    let mut result = score_frame(scorer.as_ref(), &frame, clock.as_ref())?;
                    clock.sleep_until(t_in + secs_to_ns(sampler.sample()));
                    let t_done = clock.now_ns();
                    result.complete_ns = t_done;
                    hops.lock()
                        .unwrap()
                        .record(frame.seq, TOPIC_OOD, Stage::DetectDone, t_done)?;
                    let flagged = result.flagged;
                    ood_bus.publish(&ood_topic, result, t_done)?;
                    if flagged {
                        clock.sleep_sim(cfg.latency.detect_to_estop);
                        let t = clock.now_ns();
                        hops.lock()
                            .unwrap()
                            .record(frame.seq, TOPIC_ESTOP, Stage::EstopSent, t)?;
                        estop_bus.publish(&estop_topic, frame.seq, t)?;
                    }
                    Ok(())
                })();
                if let Err(e) = step {
                    report(&errors, &done, e);
                }
            }
        });

        // Lane-following node.
        s.spawn(|| {
            let mut follower = LaneFollower::new(cfg.vision);
            let mut k = 0u64;
            while cfg.lane_following && !done.load(Ordering::SeqCst) {
                clock.sleep_until(super::tick_time_ns(k, cfg.lane_rate_hz));
                k += 1;
                let Some(env) = lane_in.take_latest() else {
                    continue;
                };
                let x = env.payload.vehicle_x.unwrap_or(0.0);
                let step = (|| -> Result<(), SimError> {
                    let img = render_frame(cfg, x)?;
                    let (raw, smoothed) = follower.process(&img)?;
                    let t = clock.now_ns();
                    steering.lock().unwrap().push(SteeringRecord {
                        t_ns: t,
                        seq: env.seq,
                        raw_deg: raw.angle_deg,
                        smoothed_deg: smoothed,
                        confidence: raw.confidence,
                    });
                    steer_bus.publish(&steer_topic, smoothed, t)?;
                    Ok(())
                })();
                if let Err(e) = step {
                    // Past the obstacle there is nothing to render; the run is ending.
                    if !done.load(Ordering::SeqCst) {
                        report(&errors, &done, e);
                    }
                }
            }
        });

        // Motor node.
        s.spawn(|| {
            let mut motor = match MotorController::new(cfg.control, latch.clone()) {
                Ok(m) => m,
                Err(e) => return report(&errors, &done, e.into()),
            };
            while !done.load(Ordering::SeqCst) {
                if let Some(env) = estop_in.take_next() {
                    clock.sleep_sim(cfg.latency.estop_to_motor);
                    let t = clock.now_ns();
                    if motor.engage_estop(t) {
                        let mut p = plant.lock().unwrap();
                        let x = p.advance_to(t);
                        p.set_speed(t, 0.0);
                        drop(p);
                        *stop_x.lock().unwrap() = Some((t, x));
                        motion.lock().unwrap().push(MotionSample {
                            t_ns: t,
                            x,
                            speed: 0.0,
                        });
                        if let Err(e) = hops.lock().unwrap().record(
                            env.payload,
                            TOPIC_MOTOR,
                            Stage::MotorZeroed,
                            t,
                        ) {
                            report(&errors, &done, e.into());
                        }
                        done.store(true, Ordering::SeqCst);
                    }
                    continue;
                }
                if let Some(env) = steer_in.take_next() {
                    let t = clock.now_ns();
                    match motor.on_steering(env.payload, cfg.speed, t) {
                        Ok(cmd) => plant.lock().unwrap().set_speed(t, cmd.forward_speed()),
                        Err(e) => report(&errors, &done, e.into()),
                    }
                    continue;
                }
                clock.sleep_sim(POLL);
            }
        });

        // Supervisor: collision and timeout.
        let max_ns = secs_to_ns(cfg.max_duration);
        while !done.load(Ordering::SeqCst) {
            let t = clock.now_ns();
            let x = plant.lock().unwrap().position_at(t);
            if (cfg.obstacle != ObstacleKind::None && x >= cfg.obstacle_distance) || t >= max_ns {
                done.store(true, Ordering::SeqCst);
                break;
            }
            clock.sleep_sim(POLL);
        }
    });

    if let Some(e) = errors.lock().unwrap().first() {
        return Err(SimError::Invariant(e.clone()));
    }
    let end_ns = clock.now_ns();
    let d = cfg.obstacle_distance;
    let has_obstacle = cfg.obstacle != ObstacleKind::None;
    let stop = *stop_x.lock().unwrap();
    let (reason, x_at_stop, x_final) = match stop {
        Some((_, x)) if !has_obstacle || x < d => {
            let xf = x + cfg.coast_distance;
            (
                EndReason::Stopped,
                x,
                if has_obstacle { xf.min(d) } else { xf },
            )
        }
        Some(_) => (EndReason::Collision, d, d),
        None => {
            let x = plant.lock().unwrap().position_at(end_ns);
            if has_obstacle && x >= d {
                (EndReason::Collision, d, d)
            } else {
                (EndReason::Timeout, x, x)
            }
        }
    };
    let mut ood = Vec::new();
    while let Some(env) = ood_log.take_next() {
        ood.push(env.payload);
    }
    let frames_scored = ood.len();
    let stopping_distance = has_obstacle.then(|| (d - x_final).max(0.0));
    let hops = std::mem::take(&mut *hops.lock().unwrap()).into_events();
    let trigger_seq = hops
        .iter()
        .find(|h| h.stage == Stage::MotorZeroed)
        .map(|h| h.seq);
    let mut motion = std::mem::take(&mut *motion.lock().unwrap());
    if stop.is_none() {
        motion.push(MotionSample {
            t_ns: end_ns,
            x: x_at_stop,
            speed: 0.0,
        });
    }
    let mut log = RunLog {
        config: cfg.clone(),
        detector: scorer.config().clone(),
        hops,
        frames: std::mem::take(&mut *frames.lock().unwrap()),
        ood,
        motion,
        steering: std::mem::take(&mut *steering.lock().unwrap()),
        outcome: Outcome {
            end_reason: reason,
            end_ns,
            x_at_stop,
            x_final,
            stopping_distance,
            collision: stopping_distance.is_some_and(|s| s <= 0.0),
            estop_ns: latch.latched_at(),
            trigger_seq,
            frames_scored,
            velocity_estimate: None,
        },
    };
    log.outcome.velocity_estimate = crate::analysis::velocity_estimate(&log).ok();
    Ok(log)
}
