use serde::{Deserialize, Serialize};

use crate::control::WheelCommand;

/// Straight-track longitudinal state. Steering changes the logged angle only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub velocity: f64,
    pub stopped: bool,
}

/// Advances the state by `dt` seconds under `cmd`. Non-positive `dt` leaves
/// the position unchanged.
pub fn step_kinematics(state: VehicleState, cmd: &WheelCommand, dt: f64) -> VehicleState {
    let velocity = cmd.forward_speed().max(0.0);
    let dx = if dt > 0.0 { velocity * dt } else { 0.0 };
    VehicleState {
        x: state.x + dx,
        velocity,
        stopped: state.stopped || velocity == 0.0,
    }
}

/// Piecewise-constant-speed integrator keyed on nanosecond timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Odometer {
    x: f64,
    speed: f64,
    t_ns: u64,
}

impl Odometer {
    pub fn new(speed: f64) -> Self {
        Self {
            x: 0.0,
            speed,
            t_ns: 0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn t_ns(&self) -> u64 {
        self.t_ns
    }

    /// Position at `t_ns` without committing; `t_ns` must not precede the
    /// last update.
    pub fn position_at(&self, t_ns: u64) -> f64 {
        self.x + self.speed * ((t_ns.saturating_sub(self.t_ns)) as f64 * 1e-9)
    }

    pub fn advance_to(&mut self, t_ns: u64) -> f64 {
        self.x = self.position_at(t_ns);
        self.t_ns = self.t_ns.max(t_ns);
        self.x
    }

    pub fn set_speed(&mut self, t_ns: u64, speed: f64) {
        self.advance_to(t_ns);
        self.speed = speed.max(0.0);
    }

    pub fn set_x(&mut self, x: f64) {
        self.x = x;
    }

    /// Earliest whole nanosecond at which `target` is reached, if moving.
    pub fn time_to_reach(&self, target: f64) -> Option<u64> {
        if self.x >= target {
            return Some(self.t_ns);
        }
        if self.speed <= 0.0 {
            return None;
        }
        let secs = (target - self.x) / self.speed;
        Some(self.t_ns + (secs * 1e9).ceil() as u64)
    }
}
