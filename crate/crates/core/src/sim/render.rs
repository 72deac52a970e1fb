//! Synthetic camera: a dark road with two white lane lines converging on a
//! vanishing point, and optionally an obstacle standing in the lane.
//!
//! Ground-plane projection puts a point at distance `d` on image row
//! `HORIZON + ground_scale / d`. `ground_scale` is chosen so the bottom half of
//! the frame (the part the detector and the lane follower look at) starts
//! exactly at the risk-zone boundary.

use super::config::{ObstacleKind, ScenarioConfig};
use super::SimError;
use crate::vision::{Image, CAMERA_HEIGHT, CAMERA_WIDTH};

pub const HORIZON_Y: f64 = 120.0;
/// First row of the lower half of the frame.
pub const VIEW_TOP: usize = CAMERA_HEIGHT / 2;
/// Horizontal spread of each lane line per row below the horizon.
pub const LANE_SPREAD: f64 = 280.0 / 360.0;
pub const CENTRE_X: f64 = (CAMERA_WIDTH as f64 - 1.0) / 2.0;

const SKY: [u8; 3] = [90, 110, 130];
const ROAD: [u8; 3] = [45, 45, 48];
const LANE: [u8; 3] = [235, 235, 235];
const NOISE_AMPLITUDE: i32 = 6;
/// Rasterisation slack so that boundary rows do not flicker with rounding.
const EPS: f64 = 1e-6;

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    fn clip_rows(&self, lo: usize, hi: usize) -> Option<PixelRect> {
        let y0 = self.y0.max(lo);
        let y1 = self.y1.min(hi);
        (y0 <= y1).then_some(PixelRect { y0, y1, ..*self })
    }
}

fn ground_scale(cfg: &ScenarioConfig) -> f64 {
    (VIEW_TOP as f64 - HORIZON_Y) * cfg.risk_zone
}

/// Where the obstacle lands on screen with the vehicle at `vehicle_x`, or
/// `None` if there is no obstacle or it is entirely off-screen.
pub fn obstacle_rect(cfg: &ScenarioConfig, vehicle_x: f64) -> Option<PixelRect> {
    let look = cfg.obstacle.look()?;
    let d = (cfg.obstacle_distance - vehicle_x).max(1e-6);
    let base = HORIZON_Y + ground_scale(cfg) / d;
    let top = base - look.height_px_m / d;
    let half_w = 0.5 * look.width_px_m / d;
    let max_x = (CAMERA_WIDTH - 1) as f64;
    let max_y = (CAMERA_HEIGHT - 1) as f64;
    let x0 = (CENTRE_X - half_w - EPS).ceil().max(0.0);
    let x1 = (CENTRE_X + half_w + EPS).floor().min(max_x);
    let y0 = (top - EPS).ceil().max(0.0);
    let y1 = (base + EPS).floor().min(max_y);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some(PixelRect {
        x0: x0 as usize,
        x1: x1 as usize,
        y0: y0 as usize,
        y1: y1 as usize,
    })
}

/// Fraction of the lower half of the frame covered by the obstacle.
pub fn obstacle_fraction(cfg: &ScenarioConfig, vehicle_x: f64) -> f64 {
    let view = CAMERA_WIDTH * (CAMERA_HEIGHT - VIEW_TOP);
    obstacle_rect(cfg, vehicle_x)
        .and_then(|r| r.clip_rows(VIEW_TOP, CAMERA_HEIGHT - 1))
        .map_or(0.0, |r| r.area() as f64 / view as f64)
}

/// Centre x and half thickness of the left and right lane lines on row `y`,
/// or `None` above the horizon.
pub fn lane_geometry(y: usize) -> Option<(f64, f64, f64)> {
    let below = y as f64 - HORIZON_Y;
    if below <= 0.0 {
        return None;
    }
    let half = (0.02 * below).max(0.6);
    Some((
        CENTRE_X - LANE_SPREAD * below,
        CENTRE_X + LANE_SPREAD * below,
        half,
    ))
}

/// True where the noiseless scene paints lane marking.
pub fn is_lane_pixel(x: usize, y: usize) -> bool {
    lane_geometry(y).is_some_and(|(l, r, half)| {
        let x = x as f64;
        (x - l).abs() <= half || (x - r).abs() <= half
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn noise_base(seed: u64, vehicle_x: f64) -> u64 {
    splitmix64(seed ^ splitmix64(vehicle_x.to_bits()))
}

fn noisy(c: u8, h: u64, shift: u32) -> u8 {
    let span = (2 * NOISE_AMPLITUDE + 1) as u64;
    let n = ((h >> shift) & 0xFFFF) % span;
    (c as i32 + n as i32 - NOISE_AMPLITUDE).clamp(0, 255) as u8
}

/// Renders the 640x480 RGB frame seen from `vehicle_x`.
pub fn render_frame(cfg: &ScenarioConfig, vehicle_x: f64) -> Result<Image, SimError> {
    render_frame_seeded(cfg, vehicle_x, cfg.seed)
}

/// As [`render_frame`] with an explicit noise seed.
pub fn render_frame_seeded(
    cfg: &ScenarioConfig,
    vehicle_x: f64,
    seed: u64,
) -> Result<Image, SimError> {
    if !vehicle_x.is_finite()
        || (cfg.obstacle != ObstacleKind::None && vehicle_x >= cfg.obstacle_distance)
    {
        return Err(SimError::Render(format!(
            "vehicle at {vehicle_x} m is not in front of the obstacle at {} m",
            cfg.obstacle_distance
        )));
    }
    let (w, h) = (CAMERA_WIDTH, CAMERA_HEIGHT);
    let mut data = vec![0u8; w * h * 3];
    let base = noise_base(seed, vehicle_x);
    let obstacle = obstacle_rect(cfg, vehicle_x);
    let obstacle_rgb = cfg.obstacle.look().map(|l| l.rgb);
    for y in 0..h {
        let lanes = lane_geometry(y);
        for x in 0..w {
            let colour = match (obstacle, obstacle_rgb) {
                (Some(r), Some(rgb)) if r.contains(x, y) => rgb,
                _ => match lanes {
                    None => SKY,
                    Some((l, r, half)) => {
                        let xf = x as f64;
                        if (xf - l).abs() <= half || (xf - r).abs() <= half {
                            LANE
                        } else {
                            ROAD
                        }
                    }
                },
            };
            let idx = y * w + x;
            let hsh = splitmix64(base ^ idx as u64);
            let px = &mut data[idx * 3..idx * 3 + 3];
            for (c, (out, &v)) in px.iter_mut().zip(colour.iter()).enumerate() {
                *out = noisy(v, hsh, 16 * c as u32);
            }
        }
    }
    Ok(Image::new(w, h, 3, data)?)
}

/// Per-pixel ground truth for the obstacle (255 where it is drawn).
pub fn obstacle_mask(cfg: &ScenarioConfig, vehicle_x: f64) -> Image {
    let mut mask = Image::filled(CAMERA_WIDTH, CAMERA_HEIGHT, 1, 0);
    if let Some(r) = obstacle_rect(cfg, vehicle_x) {
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                mask.set_gray(x, y, 255);
            }
        }
    }
    mask
}
