//! Simulation and analysis toolkit for a camera-driven robot that brakes when
//! a VAE-based out-of-distribution detector flags the scene.

pub mod analysis;
pub mod bus;
pub mod clock;
pub mod control;
pub mod frame;
pub mod nn;
pub mod ood;
pub mod runlog;
pub mod sim;
pub mod vision;
