//! Building a ready-to-use scorer for a scenario: load or synthesise the
//! backend, score in-distribution frames, pick the latent subset and set the
//! threshold.

use std::sync::Arc;

use super::config::{ObstacleKind, ScenarioConfig, ScorerKind};
use super::oracle::OracleScorer;
use super::render::render_frame_seeded;
use super::{derive_seed, SimError};
use crate::frame::Frame;
use crate::nn::load_weights;
use crate::ood::{
    calibrate_threshold, ood_score, select_detectors, DetectorConfig, Scorer, VaeScorer,
};

#[derive(Debug, Clone)]
pub struct Calibration {
    pub detector: DetectorConfig,
    /// Score of every calibration frame under the final subset.
    pub scores: Vec<f64>,
}

/// Vehicle positions for `n` calibration frames, spread over the approach.
pub fn calibration_positions(cfg: &ScenarioConfig, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| cfg.obstacle_distance * i as f64 / n.max(1) as f64)
        .collect()
}

/// Empty-lane frames (the in-distribution set), each with its own noise.
pub fn calibration_frames(
    cfg: &ScenarioConfig,
    n: usize,
    with_images: bool,
) -> Result<Vec<Frame>, SimError> {
    let empty = ScenarioConfig {
        obstacle: ObstacleKind::None,
        ..cfg.clone()
    };
    calibration_positions(cfg, n)
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let image = if with_images {
                let seed = derive_seed(cfg.seed, 0xCA11_0000 + i as u64);
                Some(Arc::new(render_frame_seeded(&empty, x, seed)?))
            } else {
                None
            };
            Ok(Frame {
                seq: i as u64 + 1,
                capture_ns: 0,
                vehicle_x: Some(x),
                image,
            })
        })
        .collect()
}

/// Picks the subset (unless given) and the nearest-rank threshold from a
/// matrix of per-frame KL vectors.
pub fn calibrate_from_kl(
    kl_rows: &[Vec<f64>],
    quantile: f64,
    k: usize,
    subset: Option<Vec<usize>>,
) -> Result<Calibration, SimError> {
    let first = kl_rows
        .first()
        .ok_or(crate::ood::OodError::EmptyCalibration)?;
    let dim = first.len();
    let subset = match subset {
        Some(s) => s,
        None => select_detectors(kl_rows, k)?,
    };
    let scores = kl_rows
        .iter()
        .map(|row| ood_score(row, &subset))
        .collect::<Result<Vec<_>, _>>()?;
    if scores.len() == 1 {
        log::warn!("calibrating on a single frame; the threshold is its score");
    }
    let threshold = calibrate_threshold(&scores, quantile)?;
    Ok(Calibration {
        detector: DetectorConfig::new(subset, threshold, dim)?,
        scores,
    })
}

fn provisional(latent_dim: usize) -> Result<DetectorConfig, SimError> {
    Ok(DetectorConfig::new(vec![0], 0.0, latent_dim)?)
}

/// The configured scorer before calibration (subset `[0]`, threshold 0).
pub fn base_scorer(cfg: &ScenarioConfig) -> Result<Box<dyn ScorerWithConfig>, SimError> {
    match cfg.detector.scorer {
        ScorerKind::Oracle => Ok(Box::new(OracleScorer::new(
            cfg.clone(),
            provisional(cfg.detector.latent_dim)?,
        )?)),
        ScorerKind::Vae => {
            let path = cfg
                .detector
                .weights
                .as_ref()
                .ok_or_else(|| SimError::Config("the vae scorer needs a weight file".into()))?;
            let model = load_weights(path).map_err(crate::ood::OodError::from)?;
            let dim = model.latent_dim();
            Ok(Box::new(VaeScorer::new(model, provisional(dim)?)?))
        }
    }
}

/// A scorer whose detector configuration can be swapped after calibration.
pub trait ScorerWithConfig: Scorer {
    fn with_config(&self, config: DetectorConfig) -> Result<Arc<dyn Scorer>, SimError>;
}

impl ScorerWithConfig for OracleScorer {
    fn with_config(&self, config: DetectorConfig) -> Result<Arc<dyn Scorer>, SimError> {
        Ok(Arc::new(self.reconfigured(config)?))
    }
}

impl ScorerWithConfig for VaeScorer {
    fn with_config(&self, config: DetectorConfig) -> Result<Arc<dyn Scorer>, SimError> {
        Ok(Arc::new(VaeScorer::new(self.model().clone(), config)?))
    }
}

/// KL vectors of in-distribution frames under the configured backend.
pub fn score_calibration_frames(
    cfg: &ScenarioConfig,
    frames: &[Frame],
) -> Result<Vec<Vec<f64>>, SimError> {
    let base = base_scorer(cfg)?;
    // The oracle reads the scene description, so it must see an empty lane.
    let empty_oracle;
    let reference: &dyn Scorer = match cfg.detector.scorer {
        ScorerKind::Oracle => {
            let empty = ScenarioConfig {
                obstacle: ObstacleKind::None,
                ..cfg.clone()
            };
            empty_oracle = OracleScorer::new(empty, base.config().clone())?;
            &empty_oracle
        }
        ScorerKind::Vae => base.as_ref(),
    };
    Ok(frames
        .iter()
        .map(|f| reference.kl_vector(f))
        .collect::<Result<Vec<_>, _>>()?)
}

/// Scores `n` rendered calibration frames and derives the detector
/// configuration.
pub fn calibrate(
    cfg: &ScenarioConfig,
    n: usize,
) -> Result<(Arc<dyn Scorer>, Calibration), SimError> {
    let needs_image = cfg.detector.scorer == ScorerKind::Vae;
    let frames = calibration_frames(cfg, n, needs_image)?;
    let kl_rows = score_calibration_frames(cfg, &frames)?;
    let cal = calibrate_from_kl(
        &kl_rows,
        cfg.detector.quantile,
        cfg.detector.k,
        cfg.detector.subset.clone(),
    )?;
    Ok((base_scorer(cfg)?.with_config(cal.detector.clone())?, cal))
}

/// Scorer for a run: calibrated unless the config pins the threshold.
pub fn build_scorer(cfg: &ScenarioConfig) -> Result<Arc<dyn Scorer>, SimError> {
    match cfg.detector.threshold {
        Some(threshold) => {
            let base = base_scorer(cfg)?;
            let dim = base.config().latent_dim;
            let subset = cfg.detector.subset.clone().unwrap_or_else(|| vec![0]);
            base.with_config(DetectorConfig::new(subset, threshold, dim)?)
        }
        None => Ok(calibrate(cfg, cfg.detector.calibration_frames)?.0),
    }
}
