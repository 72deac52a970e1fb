//! Nanosecond time sources shared by every node.
//!
//! Pipeline code only sees [`Clock`]; simulation mode drives a
//! [`VirtualClock`] from the discrete-event scheduler while real-time mode uses
//! a [`WallClock`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

pub trait Clock: Send + Sync {
    fn now_ns(&self) -> u64;
}

/// Time that only moves when the scheduler advances it.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves the clock forward. Moving backwards is a scheduler bug.
    pub fn advance_to(&self, t_ns: u64) {
        let prev = self.now.swap(t_ns, Ordering::SeqCst);
        debug_assert!(
            t_ns >= prev,
            "virtual clock moved backwards: {prev} -> {t_ns}"
        );
    }
}

impl Clock for VirtualClock {
    fn now_ns(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}

/// Monotonic wall time measured from construction.
#[derive(Debug)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

pub fn secs_to_ns(s: f64) -> u64 {
    (s * NANOS_PER_SEC as f64).round().max(0.0) as u64
}

pub fn ns_to_secs(ns: u64) -> f64 {
    ns as f64 / NANOS_PER_SEC as f64
}
