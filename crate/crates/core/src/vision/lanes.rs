use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::hough::LineSegment;

/// Slope assigned to vertical segments when averaging.
const VERTICAL_SLOPE: f64 = 1.0e3;

/// `y = slope * x + intercept` in image coordinates (y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneLine {
    pub slope: f64,
    pub intercept: f64,
}

impl LaneLine {
    pub fn x_at(&self, y: f64) -> f64 {
        (y - self.intercept) / self.slope
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Confidence {
    BothLanes,
    OneLane,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringEstimate {
    /// Degrees, positive steers right.
    pub angle_deg: f64,
    pub confidence: Confidence,
}

/// Splits segments into left (negative slope) and right (positive slope)
/// candidates and averages each side weighted by segment length.
/// Near-horizontal segments (`|slope| <= slope_cutoff`) are discarded and
/// vertical ones are assigned by which half of the image their midpoint is in.
pub fn group_lanes(
    segments: &[LineSegment],
    img_width: usize,
    slope_cutoff: f64,
) -> (Option<LaneLine>, Option<LaneLine>) {
    let centre = (img_width as f64 - 1.0) / 2.0;
    // (sum of length * slope, sum of length * intercept, sum of length)
    let mut left = (0.0, 0.0, 0.0);
    let mut right = (0.0, 0.0, 0.0);
    for s in segments {
        let len = s.length();
        if len == 0.0 {
            continue;
        }
        let raw = s.slope();
        let (slope, is_left) = if raw.is_infinite() || raw.abs() > VERTICAL_SLOPE {
            let is_left = s.mid_x() < centre;
            (
                if is_left {
                    -VERTICAL_SLOPE
                } else {
                    VERTICAL_SLOPE
                },
                is_left,
            )
        } else if raw < -slope_cutoff {
            (raw, true)
        } else if raw > slope_cutoff {
            (raw, false)
        } else {
            continue;
        };
        let intercept = 0.5 * (s.y1 + s.y2) - slope * s.mid_x();
        let side = if is_left { &mut left } else { &mut right };
        side.0 += len * slope;
        side.1 += len * intercept;
        side.2 += len;
    }
    let finish = |(ms, bs, l): (f64, f64, f64)| {
        (l > 0.0).then(|| LaneLine {
            slope: ms / l,
            intercept: bs / l,
        })
    };
    (finish(left), finish(right))
}

/// Steering toward the lane centre at the look-ahead row (the top row of the
/// view). `lookahead_px` is the vertical distance to that row; with one lane
/// the centre is taken half a nominal lane width inside it.
pub fn steering_angle(
    left: Option<LaneLine>,
    right: Option<LaneLine>,
    img_width: usize,
    lookahead_px: f64,
    lane_width_px: f64,
) -> SteeringEstimate {
    let centre = (img_width as f64 - 1.0) / 2.0;
    let (target, confidence) = match (left, right) {
        (Some(l), Some(r)) => (0.5 * (l.x_at(0.0) + r.x_at(0.0)), Confidence::BothLanes),
        (Some(l), None) => (l.x_at(0.0) + 0.5 * lane_width_px, Confidence::OneLane),
        (None, Some(r)) => (r.x_at(0.0) - 0.5 * lane_width_px, Confidence::OneLane),
        (None, None) => {
            return SteeringEstimate {
                angle_deg: 0.0,
                confidence: Confidence::None,
            }
        }
    };
    let angle = (target - centre).atan2(lookahead_px).to_degrees();
    SteeringEstimate {
        angle_deg: if angle.is_finite() {
            angle.clamp(-90.0, 90.0)
        } else {
            0.0
        },
        confidence,
    }
}

/// Moving average over the last `window` angles.
#[derive(Debug, Clone)]
pub struct AngleSmoother {
    window: usize,
    history: VecDeque<f64>,
}

impl AngleSmoother {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            history: VecDeque::new(),
        }
    }

    pub fn with_history(window: usize, history: &[f64]) -> Self {
        let mut s = Self::new(window);
        for &a in history {
            s.push(a);
        }
        s
    }

    fn push(&mut self, angle: f64) {
        self.history.push_back(angle);
        while self.history.len() > self.window {
            self.history.pop_front();
        }
    }

    pub fn smooth(&mut self, angle: f64) -> f64 {
        self.push(angle);
        self.history.iter().sum::<f64>() / self.history.len() as f64
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }
}
