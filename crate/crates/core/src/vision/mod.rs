//! Classical lane following: resize/crop, white mask, Canny, Hough, slope
//! grouping, steering angle and a moving-average filter.

pub mod canny;
pub mod hough;
mod image;
pub mod lanes;
mod preprocess;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::image::Image;
pub use canny::canny;
pub use hough::{hough_lines, hough_peaks, HoughParams, LineSegment};
pub use lanes::{
    group_lanes, steering_angle, AngleSmoother, Confidence, LaneLine, SteeringEstimate,
};
pub use preprocess::{
    encoder_input, preprocess, resize_bilinear, white_mask, CAMERA_HEIGHT, CAMERA_WIDTH,
    CROP_HEIGHT, CROP_TOP, RESIZED_HEIGHT, RESIZED_WIDTH,
};

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("expected a 640x480 RGB frame, got {width}x{height}x{channels}")]
    FrameShape {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("unsupported channel count {0}")]
    Channels(usize),
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("image {width}x{height} is smaller than the 5x5 Canny kernel")]
    TooSmall { width: usize, height: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("PNM: {0}")]
    Pnm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tunables for the lane follower. None of these come from measurements on
/// the robot; they are chosen for the synthetic track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionParams {
    pub mask_lo: u8,
    pub canny_low: f64,
    pub canny_high: f64,
    pub hough: HoughParams,
    pub slope_cutoff: f64,
    pub smoothing_window: usize,
    /// Lane width at the look-ahead row, used when only one lane is visible.
    pub lane_width_px: f64,
}

impl Default for VisionParams {
    fn default() -> Self {
        Self {
            mask_lo: 200,
            canny_low: 50.0,
            canny_high: 150.0,
            hough: HoughParams::default(),
            slope_cutoff: 0.3,
            smoothing_window: 5,
            lane_width_px: 37.3,
        }
    }
}

/// Intermediate products of one pass, kept for debug dumps.
#[derive(Debug, Clone)]
pub struct LaneTrace {
    pub gray: Image,
    pub mask: Image,
    pub edges: Image,
    pub segments: Vec<LineSegment>,
    pub left: Option<LaneLine>,
    pub right: Option<LaneLine>,
    pub estimate: SteeringEstimate,
}

/// Stateless part of the pipeline: camera frame to raw steering estimate.
pub fn estimate_steering(frame: &Image, params: &VisionParams) -> Result<LaneTrace, VisionError> {
    let gray = preprocess(frame)?;
    let mask = white_mask(&gray, params.mask_lo)?;
    let edges = canny(&mask, params.canny_low, params.canny_high)?;
    let segments = hough_lines(&edges, &params.hough)?;
    let (left, right) = group_lanes(&segments, gray.width(), params.slope_cutoff);
    let estimate = steering_angle(
        left,
        right,
        gray.width(),
        gray.height() as f64,
        params.lane_width_px,
    );
    Ok(LaneTrace {
        gray,
        mask,
        edges,
        segments,
        left,
        right,
        estimate,
    })
}

/// The lane-following node: raw estimates smoothed over recent frames.
#[derive(Debug, Clone)]
pub struct LaneFollower {
    params: VisionParams,
    smoother: AngleSmoother,
}

impl LaneFollower {
    pub fn new(params: VisionParams) -> Self {
        Self {
            smoother: AngleSmoother::new(params.smoothing_window),
            params,
        }
    }

    pub fn params(&self) -> &VisionParams {
        &self.params
    }

    /// Returns the raw estimate and the smoothed angle in degrees.
    pub fn process(&mut self, frame: &Image) -> Result<(SteeringEstimate, f64), VisionError> {
        let trace = estimate_steering(frame, &self.params)?;
        let smoothed = self.smoother.smooth(trace.estimate.angle_deg);
        Ok((trace.estimate, smoothed))
    }
}
