//! Standard (non-probabilistic) Hough transform over `(rho, theta)` with
//! segment extraction along each accumulator peak.
//!
//! A line is `rho = (x - cx) cos(theta) + (y - cy) sin(theta)` with theta in
//! `[0, 180)` and `(cx, cy)` the image centre `((w - 1) / 2, (h - 1) / 2)`.
//! Pixel `(x, y)` votes for bin `round(rho / rho_res) + offset` in every theta
//! column, where `offset = ceil(diag / rho_res)`. Measuring rho from the
//! centre makes the transform of a mirrored edge map the exact mirror of the
//! original (theta -> 180 - theta, same rho).

use serde::{Deserialize, Serialize};

use super::{Image, VisionError};

/// Half-width, in bins, of the window a peak must dominate.
pub const PEAK_RADIUS_RHO: usize = 3;
pub const PEAK_RADIUS_THETA: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughParams {
    pub rho_res: f64,
    pub theta_res_deg: f64,
    pub votes: u32,
    pub min_len: f64,
    pub max_gap: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            rho_res: 1.0,
            theta_res_deg: 1.0,
            votes: 15,
            min_len: 10.0,
            max_gap: 4.0,
        }
    }
}

impl HoughParams {
    fn validate(&self) -> Result<(), VisionError> {
        if !(self.rho_res > 0.0 && self.theta_res_deg > 0.0 && self.votes >= 1) {
            return Err(VisionError::InvalidParameter(
                "hough resolutions must be > 0 and votes >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl LineSegment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// `dy/dx` in image coordinates; `f64::INFINITY` for vertical segments.
    pub fn slope(&self) -> f64 {
        let dx = self.x2 - self.x1;
        if dx == 0.0 {
            f64::INFINITY
        } else {
            (self.y2 - self.y1) / dx
        }
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    pub fn mid_x(&self) -> f64 {
        0.5 * (self.x1 + self.x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughPeak {
    pub rho_bin: usize,
    pub theta_bin: usize,
    pub rho: f64,
    pub theta_deg: f64,
    pub votes: u32,
}

/// Vote counts, indexed `[theta_bin * n_rho + rho_bin]`.
#[derive(Debug, Clone)]
pub struct Accumulator {
    pub n_rho: usize,
    pub n_theta: usize,
    pub rho_offset: usize,
    pub rho_res: f64,
    pub theta_res_deg: f64,
    pub votes: Vec<u32>,
    pub cx: f64,
    pub cy: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize, rho_res: f64, theta_res_deg: f64) -> Self {
        let diag = ((width * width + height * height) as f64).sqrt();
        let rho_offset = (diag / rho_res).ceil() as usize;
        let n_rho = 2 * rho_offset + 1;
        let n_theta = ((180.0 / theta_res_deg).round() as usize).max(1);
        let (mut cos, mut sin): (Vec<f64>, Vec<f64>) = (0..n_theta)
            .map(|t| {
                let th = (t as f64 * theta_res_deg).to_radians();
                (th.cos(), th.sin())
            })
            .unzip();
        // Pin cos(180 - t) = -cos(t) bit for bit when the grid spans exactly
        // 180 degrees, and cos(90) = 0 so horizontal lines on half-pixel
        // rho do not straddle two bins.
        if (n_theta as f64 * theta_res_deg - 180.0).abs() < 1e-9 {
            if n_theta % 2 == 0 {
                cos[n_theta / 2] = 0.0;
            }
            for t in (n_theta / 2 + 1)..n_theta {
                cos[t] = -cos[n_theta - t];
                sin[t] = sin[n_theta - t];
            }
        }
        Self {
            n_rho,
            n_theta,
            rho_offset,
            rho_res,
            theta_res_deg,
            votes: vec![0; n_rho * n_theta],
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            cos,
            sin,
        }
    }

    pub fn rho_bin(&self, x: usize, y: usize, theta_bin: usize) -> usize {
        let rho =
            (x as f64 - self.cx) * self.cos[theta_bin] + (y as f64 - self.cy) * self.sin[theta_bin];
        ((rho / self.rho_res).round() as isize + self.rho_offset as isize) as usize
    }

    pub fn vote(&mut self, x: usize, y: usize) {
        for t in 0..self.n_theta {
            let r = self.rho_bin(x, y, t);
            self.votes[t * self.n_rho + r] += 1;
        }
    }

    pub fn get(&self, rho_bin: usize, theta_bin: usize) -> u32 {
        self.votes[theta_bin * self.n_rho + rho_bin]
    }

    /// Vote counts as an 8-bit image (theta across, rho down), scaled so the
    /// strongest cell is white.
    pub fn to_image(&self) -> Image {
        let max = self.votes.iter().copied().max().unwrap_or(0).max(1) as f64;
        let mut img = Image::filled(self.n_theta, self.n_rho, 1, 0);
        for t in 0..self.n_theta {
            for r in 0..self.n_rho {
                img.set_gray(t, r, (255.0 * self.get(r, t) as f64 / max).round() as u8);
            }
        }
        img
    }

    /// Neighbour at a signed offset; theta wraps around 180 deg, which
    /// negates rho.
    fn neighbour(
        &self,
        rho_bin: usize,
        theta_bin: usize,
        dr: isize,
        dt: isize,
    ) -> Option<(usize, usize)> {
        let mut t = theta_bin as isize + dt;
        let mut r = rho_bin as isize + dr;
        if t < 0 || t >= self.n_theta as isize {
            t = t.rem_euclid(self.n_theta as isize);
            r = 2 * self.rho_offset as isize - r;
        }
        (r >= 0 && r < self.n_rho as isize).then_some((r as usize, t as usize))
    }

    /// Cells with at least `min_votes` that dominate their window, in
    /// theta-major order.
    pub fn peaks(&self, min_votes: u32) -> Vec<HoughPeak> {
        let mut out = Vec::new();
        for t in 0..self.n_theta {
            for r in 0..self.n_rho {
                let v = self.get(r, t);
                if v < min_votes || !self.dominates(r, t) {
                    continue;
                }
                out.push(HoughPeak {
                    rho_bin: r,
                    theta_bin: t,
                    rho: (r as f64 - self.rho_offset as f64) * self.rho_res,
                    theta_deg: t as f64 * self.theta_res_deg,
                    votes: v,
                });
            }
        }
        out
    }

    /// Tie-break key for equal vote counts; smaller wins. Mirroring the edge
    /// map maps every cell to one with the same key, so suppression among
    /// ties does not depend on orientation. Cells with equal keys (mirror
    /// pairs of each other) do not suppress one another.
    fn tie_key(&self, r: usize, t: usize) -> (usize, usize) {
        (t.abs_diff(self.n_theta / 2), r.abs_diff(self.rho_offset))
    }

    fn dominates(&self, r: usize, t: usize) -> bool {
        let v = self.get(r, t);
        let me = self.tie_key(r, t);
        let (rr, rt) = (PEAK_RADIUS_RHO as isize, PEAK_RADIUS_THETA as isize);
        for dt in -rt..=rt {
            for dr in -rr..=rr {
                if dr == 0 && dt == 0 {
                    continue;
                }
                let Some((nr, nt)) = self.neighbour(r, t, dr, dt) else {
                    continue;
                };
                let nv = self.get(nr, nt);
                if nv > v || (nv == v && self.tie_key(nr, nt) < me) {
                    return false;
                }
            }
        }
        true
    }
}

pub fn edge_pixels(edges: &Image) -> Vec<(usize, usize)> {
    let w = edges.width();
    edges
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| (i % w, i / w))
        .collect()
}

pub fn accumulate(edges: &Image, params: &HoughParams) -> Result<Accumulator, VisionError> {
    params.validate()?;
    if !edges.is_gray() {
        return Err(VisionError::Channels(edges.channels()));
    }
    let mut acc = Accumulator::new(
        edges.width(),
        edges.height(),
        params.rho_res,
        params.theta_res_deg,
    );
    for (x, y) in edge_pixels(edges) {
        acc.vote(x, y);
    }
    Ok(acc)
}

pub fn hough_peaks(edges: &Image, params: &HoughParams) -> Result<Vec<HoughPeak>, VisionError> {
    Ok(accumulate(edges, params)?.peaks(params.votes))
}

/// Peaks converted to segments: the pixels that voted for a peak are ordered
/// along the line, split wherever consecutive pixels are more than `max_gap`
/// apart, and runs at least `min_len` long become segments.
pub fn hough_lines(edges: &Image, params: &HoughParams) -> Result<Vec<LineSegment>, VisionError> {
    let acc = accumulate(edges, params)?;
    let pixels = edge_pixels(edges);
    let mut segments = Vec::new();
    for peak in acc.peaks(params.votes) {
        let th = peak.theta_deg.to_radians();
        let (dx, dy) = (-th.sin(), th.cos());
        let mut support: Vec<(f64, usize, usize)> = pixels
            .iter()
            .filter(|&&(x, y)| acc.rho_bin(x, y, peak.theta_bin) == peak.rho_bin)
            .map(|&(x, y)| (x as f64 * dx + y as f64 * dy, x, y))
            .collect();
        support.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut start = 0;
        for i in 1..=support.len() {
            let split = i == support.len() || support[i].0 - support[i - 1].0 > params.max_gap;
            if !split {
                continue;
            }
            let (a, b) = (support[start], support[i - 1]);
            if b.0 - a.0 >= params.min_len {
                segments.push(LineSegment::new(
                    a.1 as f64, a.2 as f64, b.1 as f64, b.2 as f64,
                ));
            }
            start = i;
        }
    }
    Ok(segments)
}
