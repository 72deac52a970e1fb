//! Latent-KL out-of-distribution scoring.
//!
//! The score of a frame is the sum, over a chosen subset of latent
//! dimensions, of the KL divergence between the encoder's diagonal Gaussian
//! posterior and the standard normal prior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::frame::Frame;
use crate::nn::{LatentStats, Model, NnError};
use crate::vision;

#[derive(Debug, Error)]
pub enum OodError {
    #[error("non-finite KL input or result in latent dimension {dim}")]
    NonFinite { dim: usize },
    #[error("mu has {mu} entries but logvar has {logvar}")]
    LengthMismatch { mu: usize, logvar: usize },
    #[error("latent index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("detector subset is empty")]
    EmptySubset,
    #[error("no calibration data")]
    EmptyCalibration,
    #[error("detector count k={k} must lie in 1..={dim}")]
    InvalidK { k: usize, dim: usize },
    #[error("quantile {0} must lie in (0, 1]")]
    InvalidQuantile(f64),
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("calibration matrix rows have inconsistent width")]
    RaggedMatrix,
    #[error("frame has no image to encode")]
    MissingImage,
    #[error("frame has no ground-truth position for the oracle scorer")]
    MissingPosition,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Vision(#[from] vision::VisionError),
}

/// Which latent dimensions form the score, and where the decision boundary is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub subset: Vec<usize>,
    pub threshold: f64,
    pub latent_dim: usize,
}

impl DetectorConfig {
    pub fn new(subset: Vec<usize>, threshold: f64, latent_dim: usize) -> Result<Self, OodError> {
        let cfg = Self {
            subset,
            threshold,
            latent_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), OodError> {
        if self.subset.is_empty() {
            return Err(OodError::EmptySubset);
        }
        if let Some(&index) = self.subset.iter().find(|&&i| i >= self.latent_dim) {
            return Err(OodError::IndexOutOfRange {
                index,
                dim: self.latent_dim,
            });
        }
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(OodError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    InDistribution,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodResult {
    pub seq: u64,
    pub kl: Vec<f64>,
    pub score: f64,
    pub flagged: bool,
    pub ingest_ns: u64,
    pub complete_ns: u64,
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, 1))` for every latent dimension.
pub fn kl_per_dim(stats: &LatentStats) -> Result<Vec<f64>, OodError> {
    if stats.mu.len() != stats.logvar.len() {
        return Err(OodError::LengthMismatch {
            mu: stats.mu.len(),
            logvar: stats.logvar.len(),
        });
    }
    stats
        .mu
        .iter()
        .zip(&stats.logvar)
        .enumerate()
        .map(|(dim, (&mu, &logvar))| {
            let (mu, logvar) = (mu as f64, logvar as f64);
            let kl = 0.5 * (mu * mu + logvar.exp() - logvar - 1.0);
            if kl.is_finite() {
                // exp(l) - l - 1 >= 0 analytically; rounding can leave -eps.
                Ok(kl.max(0.0))
            } else {
                Err(OodError::NonFinite { dim })
            }
        })
        .collect()
}

pub fn ood_score(kl: &[f64], subset: &[usize]) -> Result<f64, OodError> {
    if subset.is_empty() {
        return Err(OodError::EmptySubset);
    }
    subset.iter().try_fold(0.0, |acc, &i| {
        kl.get(i).map(|v| acc + v).ok_or(OodError::IndexOutOfRange {
            index: i,
            dim: kl.len(),
        })
    })
}

/// Picks the `k` latent dimensions with the highest mean KL over a
/// calibration set (rows are images). Ties go to the lower index; the result
/// is sorted ascending.
pub fn select_detectors(calibration_kl: &[Vec<f64>], k: usize) -> Result<Vec<usize>, OodError> {
    let first = calibration_kl.first().ok_or(OodError::EmptyCalibration)?;
    let dim = first.len();
    if dim == 0 {
        return Err(OodError::EmptyCalibration);
    }
    if k == 0 || k > dim {
        return Err(OodError::InvalidK { k, dim });
    }
    let mut sums = vec![0.0f64; dim];
    for row in calibration_kl {
        if row.len() != dim {
            return Err(OodError::RaggedMatrix);
        }
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = calibration_kl.len() as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// 1-based nearest rank `ceil(q * n)`, tolerant of `q * n` landing a hair
/// above an integer through rounding.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let r = q * n as f64;
    let k = if (r - r.round()).abs() < 1e-9 {
        r.round()
    } else {
        r.ceil()
    };
    (k as usize).clamp(1, n)
}

/// Nearest-rank percentile of the calibration scores.
pub fn calibrate_threshold(scores: &[f64], q: f64) -> Result<f64, OodError> {
    if scores.is_empty() {
        return Err(OodError::EmptyCalibration);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(OodError::InvalidQuantile(q));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(OodError::NonFinite { dim: i });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(q, sorted.len()) - 1])
}

/// Strict comparison: a score equal to the threshold is in-distribution.
pub fn classify(score: f64, config: &DetectorConfig) -> Decision {
    if score > config.threshold {
        Decision::Ood
    } else {
        Decision::InDistribution
    }
}

/// A source of per-dimension KL vectors for frames.
pub trait Scorer: Send + Sync {
    fn config(&self) -> &DetectorConfig;

    /// Whether [`Scorer::kl_vector`] reads `frame.image`.
    fn needs_image(&self) -> bool;

    fn kl_vector(&self, frame: &Frame) -> Result<Vec<f64>, OodError>;
}

/// Scores a frame and stamps it with the clock's ingest and completion times.
pub fn score_frame(
    scorer: &dyn Scorer,
    frame: &Frame,
    clock: &dyn Clock,
) -> Result<OodResult, OodError> {
    let ingest_ns = clock.now_ns();
    let kl = scorer.kl_vector(frame)?;
    let cfg = scorer.config();
    let score = ood_score(&kl, &cfg.subset)?;
    let flagged = classify(score, cfg) == Decision::Ood;
    Ok(OodResult {
        seq: frame.seq,
        kl,
        score,
        flagged,
        ingest_ns,
        complete_ns: clock.now_ns(),
    })
}

/// Encoder-backed scorer.
#[derive(Debug, Clone)]
pub struct VaeScorer {
    model: Model,
    config: DetectorConfig,
}

impl VaeScorer {
    pub fn new(model: Model, config: DetectorConfig) -> Result<Self, OodError> {
        config.validate()?;
        if config.latent_dim != model.latent_dim() {
            return Err(OodError::IndexOutOfRange {
                index: config.latent_dim,
                dim: model.latent_dim(),
            });
        }
        Ok(Self { model, config })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        let mut s = self.clone();
        s.config.threshold = threshold;
        s
    }
}

impl Scorer for VaeScorer {
    fn config(&self) -> &DetectorConfig {
        &self.config
    }

    fn needs_image(&self) -> bool {
        true
    }

    fn kl_vector(&self, frame: &Frame) -> Result<Vec<f64>, OodError> {
        let image = frame.image.as_ref().ok_or(OodError::MissingImage)?;
        let tensor = vision::encoder_input(image)?;
        let stats = self.model.encode(&tensor)?;
        kl_per_dim(&stats)
    }
}
