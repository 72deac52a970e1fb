mod common;

use common::trace::{hand_trace, Trace, TraceEnd, TraceInput};
use oodsim::runlog::Stage;
use oodsim::sim::{run_scenario, EndReason, ExecTimeModel, ObstacleKind, RunLog, ScenarioConfig};
use proptest::prelude::*;

fn braking_config(exec: ExecTimeModel) -> ScenarioConfig {
    ScenarioConfig {
        lane_following: false,
        exec_time: exec,
        ..ScenarioConfig::default()
    }
}

fn trace_for(cfg: &ScenarioConfig, exec_s: &[f64]) -> Trace {
    let boundary = cfg.obstacle_distance - cfg.risk_zone;
    let flag = move |x: f64| x > boundary - 1e-6;
    let ns = |s: f64| (s * 1e9).round() as u64;
    hand_trace(&TraceInput {
        speed: cfg.speed,
        camera_hz: cfg.camera_rate_hz,
        publish_ns: ns(cfg.latency.capture_to_publish),
        estop_send_ns: ns(cfg.latency.detect_to_estop),
        estop_motor_ns: ns(cfg.latency.estop_to_motor),
        exec_s,
        obstacle_x: cfg.obstacle_distance,
        coast: cfg.coast_distance,
        flag: &flag,
    })
}

fn ingest_ns(log: &RunLog, seq: u64) -> u64 {
    log.hops
        .iter()
        .find(|h| h.seq == seq && h.stage == Stage::Ingest)
        .map(|h| h.t_ns)
        .expect("ingest hop")
}

/// The simulated run agrees with the hand trace frame by frame and in its
/// outcome.
fn assert_matches_trace(log: &RunLog, trace: &Trace) {
    assert_eq!(log.ood.len(), trace.frames.len(), "scored frame count");
    for (got, want) in log.ood.iter().zip(&trace.frames) {
        assert_eq!(got.seq, want.seq);
        assert_eq!(ingest_ns(log, got.seq), want.ingest_ns, "seq {}", got.seq);
        assert_eq!(got.complete_ns, want.done_ns, "seq {}", got.seq);
        assert_eq!(
            got.flagged, want.flagged,
            "seq {} at x {}",
            got.seq, want.capture_x
        );
    }
    let o = &log.outcome;
    match trace.end {
        TraceEnd::Collision { t_ns } => {
            assert_eq!(o.end_reason, EndReason::Collision);
            assert_eq!(o.end_ns, t_ns);
            assert!(o.collision);
        }
        TraceEnd::Stopped {
            t_ns,
            x_at_stop,
            distance,
        } => {
            assert_eq!(o.end_reason, EndReason::Stopped);
            assert_eq!(o.end_ns, t_ns);
            assert!((o.x_at_stop - x_at_stop).abs() < 1e-12);
            assert!((o.stopping_distance.unwrap() - distance).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_median_exec_time_stops_as_traced() {
    let cfg = braking_config(ExecTimeModel::Constant { seconds: 0.542 });
    let log = run_scenario(&cfg).unwrap();
    let trace = trace_for(&cfg, &[0.542]);
    assert_matches_trace(&log, &trace);
    let TraceEnd::Stopped { distance, .. } = trace.end else {
        panic!("trace collides: {trace:?}");
    };
    assert!(distance > 0.0);
}

#[test]
fn slow_empirical_exec_times_follow_the_trace() {
    let samples = vec![1.328, 1.202];
    let cfg = braking_config(ExecTimeModel::Empirical {
        samples: samples.clone(),
    });
    let log = run_scenario(&cfg).unwrap();
    assert_matches_trace(&log, &trace_for(&cfg, &samples));
}

#[test]
fn oracle_flags_exactly_inside_the_risk_zone() {
    let cfg = ScenarioConfig::default();
    let boundary = cfg.obstacle_distance - cfg.risk_zone;
    for i in 0..=600 {
        let x = i as f64 * 0.001;
        if (x - boundary).abs() < 1e-6 {
            continue;
        }
        let flagged = oodsim::sim::oracle_score(&cfg, x) > cfg.detector.oracle_base;
        assert_eq!(flagged, x > boundary, "x = {x}");
    }
}

#[test]
fn detector_drops_frames_at_a_fixed_rate() {
    let cfg = ScenarioConfig {
        obstacle: ObstacleKind::None,
        max_duration: 10.0,
        lane_following: false,
        exec_time: ExecTimeModel::Constant { seconds: 0.2 },
        ..ScenarioConfig::default()
    };
    let log = run_scenario(&cfg).unwrap();
    let seqs: Vec<u64> = log.ood.iter().map(|r| r.seq).collect();
    assert!(seqs.windows(2).all(|w| w[1] > w[0]));
    assert!(
        seqs.windows(2).any(|w| w[1] > w[0] + 1),
        "no frame was dropped"
    );
    let rate = seqs.len() as f64 / cfg.max_duration;
    assert!((rate - 5.0).abs() <= 0.5, "scoring rate {rate} Hz");
    for &seq in &seqs {
        let t = ingest_ns(&log, seq);
        let newest = log
            .frames
            .iter()
            .filter(|f| f.publish_ns <= t)
            .map(|f| f.seq)
            .max()
            .unwrap();
        assert_eq!(seq, newest, "frame {seq} taken at {t} ns was stale");
    }
}

#[test]
fn threshold_zero_stops_after_first_frame_and_unreachable_threshold_collides() {
    for kind in ObstacleKind::OBSTACLES {
        let mut cfg = braking_config(ExecTimeModel::default());
        cfg.obstacle = kind;
        cfg.detector.threshold = Some(0.0);
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.outcome.end_reason, EndReason::Stopped, "{kind:?}");
        assert_eq!(log.outcome.trigger_seq, Some(log.ood[0].seq));
        assert_eq!(log.outcome.frames_scored, 1);

        cfg.detector.threshold = Some(1e6);
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.outcome.end_reason, EndReason::Collision, "{kind:?}");
        assert!(log.ood.iter().all(|r| !r.flagged));
    }
}

#[test]
fn campaign_runs_are_reproducible() {
    let cfg = ScenarioConfig::default();
    let a = oodsim::sim::run_campaign(&cfg, 8, &ObstacleKind::OBSTACLES).unwrap();
    let b = oodsim::sim::run_campaign(&cfg, 8, &ObstacleKind::OBSTACLES).unwrap();
    let ja: Vec<String> = a.iter().map(RunLog::to_json).collect();
    let jb: Vec<String> = b.iter().map(RunLog::to_json).collect();
    assert_eq!(ja, jb);
}

#[test]
fn slow_detector_scores_between_two_and_eleven_frames() {
    for seed in 0..12u64 {
        for speed in [0.035, 0.045, 0.06] {
            let cfg = ScenarioConfig {
                seed,
                speed,
                lane_following: false,
                ..ScenarioConfig::default()
            };
            let log = run_scenario(&cfg).unwrap();
            let n = log.outcome.frames_scored;
            assert_eq!(log.outcome.end_reason, EndReason::Stopped);
            assert!(
                (2..=11).contains(&n),
                "seed {seed} speed {speed}: {n} frames"
            );
        }
    }
}

fn exec_model() -> impl Strategy<Value = (ExecTimeModel, Vec<f64>)> {
    prop_oneof![
        (0.01f64..1.5).prop_map(|s| (ExecTimeModel::Constant { seconds: s }, vec![s])),
        proptest::collection::vec(0.01f64..1.5, 1..5)
            .prop_map(|v| (ExecTimeModel::Empirical { samples: v.clone() }, v)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_agrees_with_hand_trace(
        (model, samples) in exec_model(),
        speed in 0.05f64..0.4,
        camera_hz in 5.0f64..40.0,
        publish in 0.0f64..0.05,
        estop in 0.0f64..0.03,
        coast in 0.0f64..0.05,
        kind in 0usize..4,
    ) {
        let mut cfg = braking_config(model);
        cfg.speed = speed;
        cfg.camera_rate_hz = camera_hz;
        cfg.latency.capture_to_publish = publish;
        cfg.latency.estop_to_motor = estop;
        cfg.coast_distance = coast;
        cfg.obstacle = ObstacleKind::OBSTACLES[kind];
        let log = run_scenario(&cfg).unwrap();
        assert_matches_trace(&log, &trace_for(&cfg, &samples));
    }

    /// Once the motors are zeroed the vehicle moves no further than the
    /// coast distance.
    #[test]
    fn stop_is_final_up_to_coast(seed in any::<u64>(), coast in 0.0f64..0.1, kind in 0usize..4) {
        let cfg = ScenarioConfig {
            seed,
            coast_distance: coast,
            obstacle: ObstacleKind::OBSTACLES[kind],
            ..ScenarioConfig::default()
        };
        let log = run_scenario(&cfg).unwrap();
        let o = &log.outcome;
        if o.end_reason == EndReason::Stopped {
            prop_assert!(o.x_final - o.x_at_stop <= coast + 1e-12);
            let last = log.motion.last().unwrap();
            prop_assert_eq!(last.speed, 0.0);
            prop_assert!(log.motion.iter().filter(|m| m.t_ns >= o.end_ns).all(|m| m.speed == 0.0));
        }
    }
}

#[test]
fn short_constant_exec_stops_where_traced() {
    let cfg = braking_config(ExecTimeModel::Constant { seconds: 0.3 });
    let log = run_scenario(&cfg).unwrap();
    let trace = trace_for(&cfg, &[0.3]);
    assert_matches_trace(&log, &trace);
    // first flagged capture sits on the risk boundary; the stop follows one
    // detector execution plus the hop latencies later
    let first = trace.frames.iter().find(|f| f.flagged).unwrap();
    let TraceEnd::Stopped { x_at_stop, .. } = trace.end else {
        panic!("collided");
    };
    let l = &cfg.latency;
    let capture_to_ingest = (first.ingest_ns as f64 * 1e-9) - first.capture_x / cfg.speed;
    let want = first.capture_x
        + cfg.speed * (capture_to_ingest + 0.3 + l.detect_to_estop + l.estop_to_motor);
    assert!((x_at_stop - want).abs() < 1e-9, "{x_at_stop} vs {want}");
    assert!(first.capture_x >= cfg.obstacle_distance - cfg.risk_zone - 1e-9);
}

#[test]
fn lognormal_median_matches_its_parameter() {
    let mut s = oodsim::sim::ExecTimeSampler::new(ExecTimeModel::default(), 11).unwrap();
    let mut v: Vec<f64> = (0..100_000).map(|_| s.sample()).collect();
    v.sort_by(f64::total_cmp);
    let median = 0.5 * (v[49_999] + v[50_000]);
    assert!((median / 0.542 - 1.0).abs() < 0.02, "median {median}");
}

#[test]
fn every_default_run_sees_a_score_above_threshold() {
    for log in
        oodsim::sim::run_campaign(&ScenarioConfig::default(), 40, &ObstacleKind::OBSTACLES).unwrap()
    {
        assert!(log.ood.iter().any(|r| r.score > log.detector.threshold));
    }
}
