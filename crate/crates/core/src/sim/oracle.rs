//! Deterministic stand-in for the encoder: the score grows linearly with how
//! much of the detector's view the obstacle covers.

use super::config::ScenarioConfig;
use super::render::obstacle_fraction;
use crate::frame::Frame;
use crate::ood::{DetectorConfig, OodError, Scorer};

pub fn oracle_score(cfg: &ScenarioConfig, vehicle_x: f64) -> f64 {
    let gain = cfg.detector.oracle_gain * cfg.obstacle.look().map_or(0.0, |l| l.gain_factor);
    cfg.detector.oracle_base + gain * obstacle_fraction(cfg, vehicle_x)
}

/// Scores frames from their ground-truth position; never looks at pixels.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    scene: ScenarioConfig,
    config: DetectorConfig,
}

impl OracleScorer {
    pub fn new(scene: ScenarioConfig, config: DetectorConfig) -> Result<Self, OodError> {
        config.validate()?;
        Ok(Self { scene, config })
    }

    pub fn reconfigured(&self, config: DetectorConfig) -> Result<Self, OodError> {
        Self::new(self.scene.clone(), config)
    }

    pub fn score_at(&self, vehicle_x: f64) -> f64 {
        oracle_score(&self.scene, vehicle_x)
    }
}

impl Scorer for OracleScorer {
    fn config(&self) -> &DetectorConfig {
        &self.config
    }

    fn needs_image(&self) -> bool {
        false
    }

    fn kl_vector(&self, frame: &Frame) -> Result<Vec<f64>, OodError> {
        let x = frame.vehicle_x.ok_or(OodError::MissingPosition)?;
        let mut kl = vec![0.0; self.config.latent_dim];
        kl[self.config.subset[0]] = self.score_at(x);
        Ok(kl)
    }
}
