//! Hand-built discrete-event trace of the detector and e-stop path for a
//! vehicle moving at constant speed. It models only what decides a braking
//! outcome: camera ticks, publish delay, a detector that always takes the
//! newest published frame when it becomes free, and the two e-stop hops.

pub struct TraceInput<'a> {
    pub speed: f64,
    pub camera_hz: f64,
    pub publish_ns: u64,
    pub estop_send_ns: u64,
    pub estop_motor_ns: u64,
    /// Execution times in seconds, cycled in order.
    pub exec_s: &'a [f64],
    pub obstacle_x: f64,
    pub coast: f64,
    pub flag: &'a dyn Fn(f64) -> bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracedFrame {
    pub seq: u64,
    pub capture_x: f64,
    pub ingest_ns: u64,
    pub done_ns: u64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEnd {
    Collision {
        t_ns: u64,
    },
    Stopped {
        t_ns: u64,
        x_at_stop: f64,
        distance: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub frames: Vec<TracedFrame>,
    pub end: TraceEnd,
}

fn capture_ns(k: u64, hz: f64) -> u64 {
    (k as f64 * 1e9 / hz).round() as u64
}

pub fn hand_trace(inp: &TraceInput) -> Trace {
    let secs = |ns: u64| ns as f64 * 1e-9;
    let collision_ns = (inp.obstacle_x / inp.speed * 1e9).ceil() as u64;
    let published = |k: u64| capture_ns(k, inp.camera_hz) + inp.publish_ns;

    let mut frames: Vec<TracedFrame> = Vec::new();
    let mut stop_ns: Option<u64> = None;
    let mut free_at = published(0);
    let mut next_k = 0u64;
    let mut run = 0usize;
    loop {
        let end_ns = stop_ns.unwrap_or(u64::MAX).min(collision_ns);
        // the detector waits for a frame it has not yet seen
        let start = free_at.max(published(next_k));
        if start >= end_ns {
            break;
        }
        let mut k = next_k;
        while published(k + 1) <= start {
            k += 1;
        }
        let exec = (inp.exec_s[run % inp.exec_s.len()] * 1e9).round() as u64;
        run += 1;
        let done = start + exec.max(1);
        let capture_x = inp.speed * secs(capture_ns(k, inp.camera_hz));
        let flagged = (inp.flag)(capture_x);
        if done < end_ns {
            frames.push(TracedFrame {
                seq: k + 1,
                capture_x,
                ingest_ns: start,
                done_ns: done,
                flagged,
            });
            if flagged && stop_ns.is_none() {
                stop_ns = Some(done + inp.estop_send_ns + inp.estop_motor_ns);
            }
        }
        free_at = done;
        next_k = k + 1;
        if done >= end_ns {
            break;
        }
    }
    let end = match stop_ns {
        // a collision at the same instant as the motor stop wins
        Some(t) if t < collision_ns => {
            let x = inp.speed * secs(t);
            let x_final = (x + inp.coast).min(inp.obstacle_x);
            TraceEnd::Stopped {
                t_ns: t,
                x_at_stop: x,
                distance: inp.obstacle_x - x_final,
            }
        }
        _ => TraceEnd::Collision { t_ns: collision_ns },
    };
    Trace { frames, end }
}
