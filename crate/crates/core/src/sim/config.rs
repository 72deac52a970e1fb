use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::control::ControlParams;
use crate::vision::VisionParams;

/// Obstacle variants. They differ in rendered size and colour and in how
/// strongly the oracle scorer reacts to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    None,
    Duck,
    Cone,
    Block,
    Bot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleLook {
    /// Apparent height in pixels times distance in metres.
    pub height_px_m: f64,
    /// Apparent width in pixels times distance in metres.
    pub width_px_m: f64,
    pub rgb: [u8; 3],
    /// Multiplier on the oracle's gain.
    pub gain_factor: f64,
}

impl ObstacleKind {
    pub const OBSTACLES: [ObstacleKind; 4] = [
        ObstacleKind::Duck,
        ObstacleKind::Cone,
        ObstacleKind::Block,
        ObstacleKind::Bot,
    ];

    /// `None` for an empty lane.
    pub fn look(self) -> Option<ObstacleLook> {
        let (h, w, rgb, g) = match self {
            ObstacleKind::None => return None,
            ObstacleKind::Duck => (80.0, 90.0, [230, 190, 30], 1.0),
            ObstacleKind::Cone => (95.0, 60.0, [240, 110, 20], 1.2),
            ObstacleKind::Block => (85.0, 120.0, [60, 80, 200], 0.9),
            ObstacleKind::Bot => (110.0, 110.0, [50, 50, 50], 1.1),
        };
        Some(ObstacleLook {
            height_px_m: h,
            width_px_m: w,
            rgb,
            gain_factor: g,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObstacleKind::None => "none",
            ObstacleKind::Duck => "duck",
            ObstacleKind::Cone => "cone",
            ObstacleKind::Block => "block",
            ObstacleKind::Bot => "bot",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SimError> {
        [ObstacleKind::None]
            .into_iter()
            .chain(Self::OBSTACLES)
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SimError::Config(format!("unknown obstacle `{s}`")))
    }
}

/// Detector execution-time distribution, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExecTimeModel {
    Constant { seconds: f64 },
    LogNormal { median: f64, sigma: f64 },
    Empirical { samples: Vec<f64> },
}

impl Default for ExecTimeModel {
    fn default() -> Self {
        ExecTimeModel::LogNormal {
            median: 0.542,
            sigma: 0.35,
        }
    }
}

impl ExecTimeModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let valid = match self {
            ExecTimeModel::Constant { seconds } => ok(*seconds),
            ExecTimeModel::LogNormal { median, sigma } => {
                ok(*median) && sigma.is_finite() && *sigma >= 0.0
            }
            ExecTimeModel::Empirical { samples } => {
                !samples.is_empty() && samples.iter().all(|&s| ok(s))
            }
        };
        if valid {
            Ok(())
        } else {
            Err(SimError::Config(format!(
                "invalid exec-time model {self:?}"
            )))
        }
    }
}

/// Fixed transport delays between nodes, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopLatencies {
    pub capture_to_publish: f64,
    pub detect_to_estop: f64,
    pub estop_to_motor: f64,
    pub steering_to_motor: f64,
}

impl Default for HopLatencies {
    fn default() -> Self {
        Self {
            capture_to_publish: 0.015,
            detect_to_estop: 0.0,
            estop_to_motor: 0.005,
            steering_to_motor: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Oracle,
    Vae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSettings {
    pub scorer: ScorerKind,
    pub quantile: f64,
    /// Skips calibration when set.
    pub threshold: Option<f64>,
    /// Latent dimensions to sum. Chosen on the calibration set when absent.
    pub subset: Option<Vec<usize>>,
    pub k: usize,
    pub latent_dim: usize,
    pub weights: Option<PathBuf>,
    pub calibration_frames: usize,
    pub oracle_base: f64,
    pub oracle_gain: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            scorer: ScorerKind::Oracle,
            quantile: 0.8,
            threshold: None,
            subset: None,
            k: 5,
            latent_dim: 30,
            weights: None,
            calibration_frames: 100,
            oracle_base: 1.0,
            oracle_gain: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub obstacle: ObstacleKind,
    pub obstacle_distance: f64,
    pub risk_zone: f64,
    pub speed: f64,
    pub camera_rate_hz: f64,
    pub lane_rate_hz: f64,
    pub lane_following: bool,
    /// Extra travel after the motors are zeroed.
    pub coast_distance: f64,
    pub max_duration: f64,
    pub exec_time: ExecTimeModel,
    pub latency: HopLatencies,
    pub detector: DetectorSettings,
    pub control: ControlParams,
    pub vision: VisionParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            obstacle: ObstacleKind::Duck,
            obstacle_distance: 0.70,
            risk_zone: 0.60,
            speed: 0.2,
            camera_rate_hz: 30.0,
            lane_rate_hz: 5.0,
            lane_following: true,
            coast_distance: 0.0,
            max_duration: 30.0,
            exec_time: ExecTimeModel::default(),
            latency: HopLatencies::default(),
            detector: DetectorSettings::default(),
            control: ControlParams::default(),
            vision: VisionParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.risk_zone > 0.0 && self.risk_zone < self.obstacle_distance)
            || !self.obstacle_distance.is_finite()
        {
            return fail("need 0 < risk_zone < obstacle_distance");
        }
        if !(self.camera_rate_hz > 0.0 && self.camera_rate_hz.is_finite()) {
            return fail("camera rate must be > 0; the detector would never be scheduled");
        }
        if !(self.lane_rate_hz > 0.0 && self.lane_rate_hz.is_finite()) {
            return fail("lane follower rate must be > 0");
        }
        if !(self.speed >= 0.0 && self.speed <= self.control.v_max) {
            return fail("speed must lie in [0, v_max]");
        }
        if !(self.coast_distance >= 0.0)
            || !(self.max_duration > 0.0 && self.max_duration.is_finite())
        {
            return fail("coast distance must be >= 0 and max duration > 0");
        }
        let l = &self.latency;
        if [
            l.capture_to_publish,
            l.detect_to_estop,
            l.estop_to_motor,
            l.steering_to_motor,
        ]
        .iter()
        .any(|&v| !(v >= 0.0 && v.is_finite()))
        {
            return fail("hop latencies must be finite and >= 0");
        }
        let d = &self.detector;
        if !(d.quantile > 0.0 && d.quantile <= 1.0) {
            return fail("quantile must lie in (0, 1]");
        }
        if d.calibration_frames == 0 && d.threshold.is_none() {
            return fail("calibration needs at least one frame");
        }
        if d.scorer == ScorerKind::Vae && d.weights.is_none() {
            return fail("the vae scorer needs a weight file");
        }
        if !(d.oracle_gain > 0.0) || !d.oracle_base.is_finite() {
            return fail("oracle gain must be > 0");
        }
        self.exec_time.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Resolve a relative weight path against the config file's directory.
        if let (Some(w), Some(dir)) = (cfg.detector.weights.as_mut(), path.parent()) {
            if w.is_relative() {
                *w = dir.join(&*w);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}
