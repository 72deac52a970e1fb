//! Canny edge detector: 5x5 Gaussian (sigma 1.4), 3x3 Sobel, 4-direction
//! non-maximum suppression and 8-connected hysteresis. Borders replicate.

use std::collections::VecDeque;

use super::{Image, VisionError};

pub const GAUSSIAN_SIGMA: f64 = 1.4;

/// Normalised 5x5 Gaussian kernel, row-major.
pub fn gaussian_kernel() -> [f64; 25] {
    let mut k = [0.0; 25];
    let two_s2 = 2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA;
    for j in 0..5 {
        for i in 0..5 {
            let (dx, dy) = (i as f64 - 2.0, j as f64 - 2.0);
            k[j * 5 + i] = (-(dx * dx + dy * dy) / two_s2).exp();
        }
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn clamp_idx(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

pub fn gaussian_blur(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let k = gaussian_kernel();
    let src = img.data();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for j in 0..5 {
                let yy = clamp_idx(y as isize + j as isize - 2, h);
                for i in 0..5 {
                    let xx = clamp_idx(x as isize + i as isize - 2, w);
                    acc += k[j * 5 + i] * src[yy * w + xx] as f64;
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Quantised gradient direction, named by the axis along which neighbours
/// are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Gradient ~0 deg: compare left/right.
    Horizontal,
    /// Gradient ~45 deg (down-right in image coordinates).
    Diagonal,
    /// Gradient ~90 deg: compare up/down.
    Vertical,
    /// Gradient ~135 deg (down-left).
    AntiDiagonal,
}

impl Direction {
    pub fn quantize(gx: f64, gy: f64) -> Self {
        let mut deg = gy.atan2(gx).to_degrees();
        if deg < 0.0 {
            deg += 180.0;
        }
        if !(22.5..157.5).contains(&deg) {
            Direction::Horizontal
        } else if deg < 67.5 {
            Direction::Diagonal
        } else if deg < 112.5 {
            Direction::Vertical
        } else {
            Direction::AntiDiagonal
        }
    }

    /// Offsets `(forward, backward)` of the two compared neighbours.
    pub fn offsets(self) -> ((isize, isize), (isize, isize)) {
        match self {
            Direction::Horizontal => ((1, 0), (-1, 0)),
            Direction::Diagonal => ((1, 1), (-1, -1)),
            Direction::Vertical => ((0, 1), (0, -1)),
            Direction::AntiDiagonal => ((-1, 1), (1, -1)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub direction: Vec<Direction>,
}

pub fn sobel(blurred: &[f64], w: usize, h: usize) -> Gradient {
    let mut magnitude = vec![0.0; w * h];
    let mut direction = vec![Direction::Horizontal; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| {
                blurred[clamp_idx(y as isize + dy, h) * w + clamp_idx(x as isize + dx, w)]
            };
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            magnitude[y * w + x] = (gx * gx + gy * gy).sqrt();
            direction[y * w + x] = Direction::quantize(gx, gy);
        }
    }
    Gradient {
        width: w,
        height: h,
        magnitude,
        direction,
    }
}

/// Thins the gradient to local maxima along the gradient direction. A pixel
/// survives if it is strictly greater than its backward neighbour and not
/// smaller than its forward one, so plateaus keep exactly one pixel. The
/// one-pixel image border is always suppressed.
pub fn non_max_suppression(g: &Gradient) -> Vec<f64> {
    let (w, h) = (g.width, g.height);
    let mut out = vec![0.0; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = g.magnitude[i];
            if m <= 0.0 {
                continue;
            }
            let ((fx, fy), (bx, by)) = g.direction[i].offsets();
            let fwd = g.magnitude[(y as isize + fy) as usize * w + (x as isize + fx) as usize];
            let bwd = g.magnitude[(y as isize + by) as usize * w + (x as isize + bx) as usize];
            if m >= fwd && m > bwd {
                out[i] = m;
            }
        }
    }
    out
}

/// Double threshold plus 8-connected growth from strong pixels.
pub fn hysteresis(thin: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edge = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m > 0.0 && m >= high {
            edge[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edge[j] && thin[j] > 0.0 && thin[j] >= low {
                    edge[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edge
}

pub fn canny(img: &Image, low: f64, high: f64) -> Result<Image, VisionError> {
    if !img.is_gray() {
        return Err(VisionError::Channels(img.channels()));
    }
    if img.width() < 5 || img.height() < 5 {
        return Err(VisionError::TooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    if !(low >= 0.0 && low <= high) {
        return Err(VisionError::InvalidParameter(format!(
            "canny thresholds need 0 <= low <= high, got {low}, {high}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let blurred = gaussian_blur(img);
    let grad = sobel(&blurred, w, h);
    let thin = non_max_suppression(&grad);
    let edges = hysteresis(&thin, w, h, low, high);
    let data = edges.into_iter().map(|e| if e { 255 } else { 0 }).collect();
    Image::new(w, h, 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalised_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k[0], k[4]);
        assert_eq!(k[0], k[24]);
        assert!(k[12] > k[11]);
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = Image::filled(32, 24, 1, 90);
        assert_eq!(canny(&img, 50.0, 150.0).unwrap().count_nonzero(), 0);
    }

    #[test]
    fn vertical_step_edge_is_localised() {
        let (w, h, c) = (40, 20, 17);
        let data = (0..w * h)
            .map(|i| if i % w >= c { 255 } else { 0 })
            .collect();
        let img = Image::new(w, h, 1, data).unwrap();
        let edges = canny(&img, 50.0, 150.0).unwrap();
        assert!(edges.count_nonzero() > 0);
        for y in 0..h {
            for x in 0..w {
                if edges.gray(x, y) != 0 {
                    assert!((c - 1..=c + 1).contains(&x), "edge at column {x}");
                }
            }
        }
    }

    #[test]
    fn rejects_small_images_and_bad_thresholds() {
        assert!(matches!(
            canny(&Image::filled(4, 10, 1, 0), 1.0, 2.0),
            Err(VisionError::TooSmall { .. })
        ));
        assert!(canny(&Image::filled(10, 10, 1, 0), 3.0, 2.0).is_err());
    }

    #[test]
    fn direction_quantisation() {
        assert_eq!(Direction::quantize(1.0, 0.0), Direction::Horizontal);
        assert_eq!(Direction::quantize(-1.0, 0.0), Direction::Horizontal);
        assert_eq!(Direction::quantize(1.0, 1.0), Direction::Diagonal);
        assert_eq!(Direction::quantize(0.0, 1.0), Direction::Vertical);
        assert_eq!(Direction::quantize(-1.0, 1.0), Direction::AntiDiagonal);
        assert_eq!(Direction::quantize(1.0, -1.0), Direction::AntiDiagonal);
    }
}
