//! Motor control node: PID steering shaping, differential-drive wheel
//! velocities and a latched emergency stop.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("non-finite control error {0}")]
    NonFinite(f64),
    #[error("time step must be > 0, got {0}")]
    InvalidDt(f64),
    #[error("invalid controller parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub output_limit: f64,
    pub integral_limit: f64,
    /// Wheel speed offset (m/s) per unit of PID output.
    pub steering_gain: f64,
    pub v_max: f64,
}

impl Default for ControlParams {
    /// Hand-tuned for the synthetic track, gains are per degree of error.
    fn default() -> Self {
        Self {
            kp: 0.05,
            ki: 0.0,
            kd: 0.01,
            output_limit: 1.0,
            integral_limit: 10.0,
            steering_gain: 0.05,
            v_max: 0.5,
        }
    }
}

/// PID with integral clamping (anti-windup) and output clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    output_limit: f64,
    integral_limit: f64,
    integral: f64,
    prev_error: f64,
}

impl Pid {
    pub fn new(
        kp: f64,
        ki: f64,
        kd: f64,
        output_limit: f64,
        integral_limit: f64,
    ) -> Result<Self, ControlError> {
        if !(output_limit > 0.0 && integral_limit > 0.0) {
            return Err(ControlError::InvalidParameter(
                "clamps must be positive".into(),
            ));
        }
        Ok(Self {
            kp,
            ki,
            kd,
            output_limit,
            integral_limit,
            integral: 0.0,
            prev_error: 0.0,
        })
    }

    pub fn from_params(p: &ControlParams) -> Result<Self, ControlError> {
        Self::new(p.kp, p.ki, p.kd, p.output_limit, p.integral_limit)
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn step(&mut self, error: f64, dt: f64) -> Result<f64, ControlError> {
        if !error.is_finite() {
            return Err(ControlError::NonFinite(error));
        }
        if !(dt > 0.0) {
            return Err(ControlError::InvalidDt(dt));
        }
        self.integral =
            (self.integral + error * dt).clamp(-self.integral_limit, self.integral_limit);
        let derivative = (error - self.prev_error) / dt;
        self.prev_error = error;
        let u = self.kp * error + self.ki * self.integral + self.kd * derivative;
        Ok(u.clamp(-self.output_limit, self.output_limit))
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelCommand {
    pub left: f64,
    pub right: f64,
    pub t_ns: u64,
}

impl WheelCommand {
    pub fn stop(t_ns: u64) -> Self {
        Self {
            left: 0.0,
            right: 0.0,
            t_ns,
        }
    }

    pub fn forward_speed(&self) -> f64 {
        0.5 * (self.left + self.right)
    }
}

/// Positive steering speeds up the left wheel, turning right.
pub fn wheel_velocities(v_nominal: f64, steer: f64, gain: f64, v_max: f64) -> (f64, f64) {
    let left = (v_nominal + gain * steer).clamp(0.0, v_max);
    let right = (v_nominal - gain * steer).clamp(0.0, v_max);
    (left, right)
}

const UNLATCHED: u64 = u64::MAX;

/// One-way emergency-stop flag, engageable from any thread. The first
/// engagement's timestamp wins; only [`EStopLatch::reset`] clears it.
#[derive(Debug)]
pub struct EStopLatch {
    latched: AtomicBool,
    at_ns: AtomicU64,
}

impl Default for EStopLatch {
    fn default() -> Self {
        Self {
            latched: AtomicBool::new(false),
            at_ns: AtomicU64::new(UNLATCHED),
        }
    }
}

impl EStopLatch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` if this call performed the engagement.
    pub fn engage(&self, t_ns: u64) -> bool {
        let first = self
            .at_ns
            .compare_exchange(UNLATCHED, t_ns, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok();
        self.latched.store(true, Ordering::SeqCst);
        first
    }

    pub fn is_latched(&self) -> bool {
        self.latched.load(Ordering::SeqCst)
    }

    pub fn latched_at(&self) -> Option<u64> {
        match self.at_ns.load(Ordering::SeqCst) {
            UNLATCHED => None,
            t => Some(t),
        }
    }

    pub fn reset(&self) {
        self.latched.store(false, Ordering::SeqCst);
        self.at_ns.store(UNLATCHED, Ordering::SeqCst);
    }
}

/// Turns steering angles into wheel commands, zeroing everything while the
/// e-stop is latched.
#[derive(Debug)]
pub struct MotorController {
    params: ControlParams,
    pid: Pid,
    latch: Arc<EStopLatch>,
    last_t_ns: Option<u64>,
}

impl MotorController {
    pub fn new(params: ControlParams, latch: Arc<EStopLatch>) -> Result<Self, ControlError> {
        Ok(Self {
            pid: Pid::from_params(&params)?,
            params,
            latch,
            last_t_ns: None,
        })
    }

    pub fn latch(&self) -> &Arc<EStopLatch> {
        &self.latch
    }

    pub fn engage_estop(&self, t_ns: u64) -> bool {
        self.latch.engage(t_ns)
    }

    /// Command for cruising at `v_nominal` with the given steering output.
    pub fn wheel_command(&self, v_nominal: f64, steer: f64, t_ns: u64) -> WheelCommand {
        if self.latch.is_latched() {
            return WheelCommand::stop(t_ns);
        }
        let (left, right) = wheel_velocities(
            v_nominal,
            steer,
            self.params.steering_gain,
            self.params.v_max,
        );
        WheelCommand { left, right, t_ns }
    }

    /// Feeds a new steering angle (degrees; the error relative to straight
    /// ahead) through the PID and returns the resulting wheel command.
    pub fn on_steering(
        &mut self,
        angle_deg: f64,
        v_nominal: f64,
        t_ns: u64,
    ) -> Result<WheelCommand, ControlError> {
        let dt = match self.last_t_ns {
            Some(prev) if t_ns > prev => (t_ns - prev) as f64 * 1e-9,
            // First command or a repeated timestamp: use a nominal 0.2 s step.
            _ => 0.2,
        };
        self.last_t_ns = Some(t_ns);
        let steer = self.pid.step(angle_deg, dt)?;
        Ok(self.wheel_command(v_nominal, steer, t_ns))
    }
}
