mod common;

use std::sync::Arc;

use oodsim::bus::{Bus, TopicPolicy};
use oodsim::clock::{Clock, VirtualClock};
use oodsim::control::{ControlParams, EStopLatch, MotorController, Pid};
use oodsim::sim::{step_kinematics, VehicleState};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Whatever steering arrives after the latch, integrating the commanded
    /// wheel speeds adds no travel, so the total after latching is bounded by
    /// the coast distance alone.
    #[test]
    fn estop_dominates_any_command_sequence(
        cmds in proptest::collection::vec((-90.0f64..90.0, 0.0f64..0.5, 1u64..400_000_000), 1..60),
        latch_at in 0usize..60,
        coast in 0.0f64..0.2,
    ) {
        let motor_latch = Arc::new(EStopLatch::new());
        let mut motor = MotorController::new(ControlParams::default(), motor_latch.clone()).unwrap();
        let mut state = VehicleState::default();
        let mut t = 0u64;
        let mut x_latch = None;
        for (i, &(angle, v, dt)) in cmds.iter().enumerate() {
            if i == latch_at.min(cmds.len() - 1) {
                motor.engage_estop(t);
                x_latch = Some(state.x);
            }
            t += dt;
            let cmd = motor.on_steering(angle, v, t).unwrap();
            state = step_kinematics(state, &cmd, dt as f64 * 1e-9);
        }
        let x_latch = x_latch.unwrap();
        let x_final = state.x + coast;
        prop_assert!(x_final - x_latch <= coast + 1e-12);
        prop_assert!(state.stopped);
        prop_assert!(motor_latch.is_latched());
    }

    #[test]
    fn pid_is_linear_without_clamping(
        errors in proptest::collection::vec(-5.0f64..5.0, 1..30),
        a in -3.0f64..3.0,
        dt in 0.01f64..0.5,
    ) {
        let mk = || Pid::new(0.7, 0.3, 0.05, 1e9, 1e9).unwrap();
        let (mut p, mut q) = (mk(), mk());
        for &e in &errors {
            let u = p.step(e, dt).unwrap();
            let v = q.step(a * e, dt).unwrap();
            prop_assert!((v - a * u).abs() <= 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn integral_never_exceeds_its_clamp(
        errors in proptest::collection::vec(-100.0f64..100.0, 1..100),
        limit in 0.1f64..5.0,
    ) {
        let mut pid = Pid::new(0.0, 1.0, 0.0, 1e9, limit).unwrap();
        for &e in &errors {
            pid.step(e, 0.1).unwrap();
            prop_assert!(pid.integral().abs() <= limit);
        }
    }

    #[test]
    fn output_respects_its_clamp(errors in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
        let mut pid = Pid::from_params(&ControlParams::default()).unwrap();
        for &e in &errors {
            let u = pid.step(e, 0.2).unwrap();
            prop_assert!(u.abs() <= ControlParams::default().output_limit);
        }
    }
}

#[test]
fn zero_error_is_a_fixed_point() {
    let mut pid = Pid::from_params(&ControlParams::default()).unwrap();
    for _ in 0..100 {
        assert_eq!(pid.step(0.0, 0.2).unwrap(), 0.0);
    }
    assert_eq!(pid.integral(), 0.0);
}

#[test]
fn anti_windup_recovers_quickly_after_saturation() {
    let (ki, limit) = (1.0, 0.5);
    let mut pid = Pid::new(0.0, ki, 0.0, 1e9, limit).unwrap();
    for _ in 0..1000 {
        pid.step(10.0, 0.1).unwrap();
    }
    assert_eq!(pid.integral(), limit);
    // one step of opposite error unwinds by exactly e * dt
    let u = pid.step(-1.0, 0.1).unwrap();
    assert!((u - ki * (limit - 0.1)).abs() < 1e-12);
}

#[test]
fn first_latch_time_wins_across_threads() {
    let latch = Arc::new(EStopLatch::new());
    let handles: Vec<_> = (0..8u64)
        .map(|i| {
            let l = latch.clone();
            std::thread::spawn(move || l.engage(100 + i))
        })
        .collect();
    let winners = handles
        .into_iter()
        .map(|h| h.join().unwrap())
        .filter(|&w| w)
        .count();
    assert_eq!(winners, 1);
    let t = latch.latched_at().unwrap();
    assert!((100..108).contains(&t));
}

#[derive(Debug, Clone)]
enum Op {
    Publish,
    TakeLatest(usize),
    TakeNext(usize),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(
        prop_oneof![
            3 => Just(Op::Publish),
            1 => (0usize..2).prop_map(Op::TakeLatest),
            1 => (0usize..2).prop_map(Op::TakeNext),
        ],
        1..80,
    )
}

proptest! {
    /// Subscribers never see a message twice, see messages in publish order,
    /// and a conflating topic hands out only the newest unread message.
    #[test]
    fn bus_delivery_matches_a_queue_model(policy_cap in 0usize..5, script in ops()) {
        let policy = if policy_cap == 0 { TopicPolicy::Latest } else { TopicPolicy::Queue(policy_cap) };
        let cap = policy_cap.max(1);
        let clock = Arc::new(VirtualClock::new());
        let bus: Bus<u64> = Bus::new(clock.clone() as Arc<dyn Clock>);
        let topic = bus.create_topic("t", policy).unwrap();
        let subs = [bus.subscribe(&topic).unwrap(), bus.subscribe(&topic).unwrap()];
        let mut model: [std::collections::VecDeque<u64>; 2] = Default::default();
        let mut seen: [Vec<u64>; 2] = Default::default();
        let mut next = 0u64;
        for (step, op) in script.iter().enumerate() {
            clock.advance_to(step as u64 * 10);
            match *op {
                Op::Publish => {
                    let seq = bus.publish(&topic, next, clock.now_ns()).unwrap();
                    prop_assert_eq!(seq, next + 1);
                    for m in &mut model {
                        if m.len() == cap {
                            m.pop_front();
                        }
                        m.push_back(next);
                    }
                    next += 1;
                }
                Op::TakeLatest(s) => {
                    let got = subs[s].take_latest().map(|e| e.payload);
                    let want = model[s].pop_back();
                    model[s].clear();
                    prop_assert_eq!(got, want);
                    seen[s].extend(got);
                }
                Op::TakeNext(s) => {
                    let got = subs[s].take_next().map(|e| e.payload);
                    prop_assert_eq!(got, model[s].pop_front());
                    seen[s].extend(got);
                }
            }
            for s in 0..2 {
                prop_assert_eq!(subs[s].pending(), model[s].len());
            }
        }
        for s in &seen {
            prop_assert!(s.windows(2).all(|w| w[1] > w[0]));
        }
    }
}

#[test]
fn late_subscriber_receives_retained_messages() {
    let clock = Arc::new(VirtualClock::new());
    let bus: Bus<&str> = Bus::new(clock as Arc<dyn Clock>);
    let t = bus.create_topic("cam", TopicPolicy::Latest).unwrap();
    bus.publish(&t, "a", 0).unwrap();
    bus.publish(&t, "b", 0).unwrap();
    let sub = bus.subscribe(&t).unwrap();
    assert_eq!(sub.take_latest().unwrap().payload, "b");
    assert!(sub.take_latest().is_none());
}
