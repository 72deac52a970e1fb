//! Reference implementations used as test oracles. They are written for
//! clarity rather than speed and share no code with the library.
#![allow(dead_code)]

use oodsim::vision::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// KL(N(mu, e^logvar) || N(0, 1)) by composite Simpson quadrature of
/// `p(z) ln(p(z) / q(z))` over mu +- 14 sigma.
pub fn kl_quadrature(mu: f64, logvar: f64) -> f64 {
    let sigma = (0.5 * logvar).exp();
    let (a, b) = (mu - 14.0 * sigma, mu + 14.0 * sigma);
    let n = 6000;
    let h = (b - a) / n as f64;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let f = |z: f64| {
        let ln_p = -0.5 * ln_2pi - sigma.ln() - (z - mu).powi(2) / (2.0 * sigma * sigma);
        let ln_q = -0.5 * ln_2pi - z * z / 2.0;
        ln_p.exp() * (ln_p - ln_q)
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Norm-wise relative error `max|a - b| / max|b|`.
pub fn rel_err(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (&x, &y)| m.max((x as f64 - y).abs()))
        / scale
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Zero-padded cross-correlation, computed by scattering every input pixel
/// into the outputs it touches, in f64.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f32],
    (c, h, w): (usize, usize, usize),
    k: &[f32],
    (co, kh, kw): (usize, usize, usize),
    bias: &[f32],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0f64; co * oh * ow];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(o * oh + oy) * ow + ox] = bias[o] as f64;
            }
        }
    }
    for ci in 0..c {
        for iy in 0..h {
            for ix in 0..w {
                let v = x[(ci * h + iy) * w + ix] as f64;
                for o in 0..co {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            // input (iy, ix) sits at padded (iy + pad, ix + pad)
                            let py = iy + pad;
                            let px = ix + pad;
                            if py < ky || px < kx {
                                continue;
                            }
                            let (sy, sx) = (py - ky, px - kx);
                            if sy % stride != 0 || sx % stride != 0 {
                                continue;
                            }
                            let (oy, ox) = (sy / stride, sx / stride);
                            if oy >= oh || ox >= ow {
                                continue;
                            }
                            let kv = k[((o * c + ci) * kh + ky) * kw + kx] as f64;
                            out[(o * oh + oy) * ow + ox] += kv * v;
                        }
                    }
                }
            }
        }
    }
    (out, oh, ow)
}

pub fn naive_batchnorm(
    x: &[f32],
    (c, h, w): (usize, usize, usize),
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for ch in 0..c {
        for i in 0..h * w {
            let v = x[ch * h * w + i] as f64;
            let norm = (v - mean[ch] as f64) / (var[ch] as f64 + eps as f64).sqrt();
            out.push(gamma[ch] as f64 * norm + beta[ch] as f64);
        }
    }
    out
}

pub fn naive_maxpool(x: &[f32], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x[(ch * h + 2 * oy + dy) * w + 2 * ox + dx] as f64);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

pub fn naive_dense(x: &[f32], weight: &[f32], bias: &[f32], out_features: usize) -> Vec<f64> {
    let n = x.len();
    (0..out_features)
        .map(|o| {
            bias[o] as f64
                + (0..n)
                    .map(|i| weight[o * n + i] as f64 * x[i] as f64)
                    .sum::<f64>()
        })
        .collect()
}

pub fn naive_elu(x: &[f32], alpha: f32) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let v = v as f64;
            if v > 0.0 {
                v
            } else {
                alpha as f64 * (v.exp() - 1.0)
            }
        })
        .collect()
}

/// Exhaustive Hough accumulator: every `(theta, rho)` cell counts the edge
/// pixels that fall in it, with rho measured from the image centre.
/// Indexed `[theta][rho]`.
pub struct OracleAccumulator {
    pub n_theta: usize,
    pub n_rho: usize,
    pub offset: usize,
    pub rho_res: f64,
    pub theta_res: f64,
    pub cells: Vec<Vec<u32>>,
}

pub fn oracle_accumulator(edges: &Image, rho_res: f64, theta_res: f64) -> OracleAccumulator {
    let (w, h) = (edges.width(), edges.height());
    let pixels: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| edges.gray(x, y) != 0)
        .collect();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let diag = ((w * w + h * h) as f64).sqrt();
    let offset = (diag / rho_res).ceil() as usize;
    let n_rho = 2 * offset + 1;
    let n_theta = (180.0 / theta_res).round() as usize;
    let mut cells = vec![vec![0u32; n_rho]; n_theta];
    for (t, row) in cells.iter_mut().enumerate() {
        // theta and 180 - theta use exactly opposite cosines
        let mirrored = 2 * t > n_theta;
        let tt = if mirrored { n_theta - t } else { t };
        let th = (tt as f64 * theta_res).to_radians();
        let (c, s) = if mirrored {
            (-th.cos(), th.sin())
        } else if 2 * t == n_theta {
            (0.0, 1.0)
        } else {
            (th.cos(), th.sin())
        };
        for (r, cell) in row.iter_mut().enumerate() {
            *cell = pixels
                .iter()
                .filter(|&&(x, y)| {
                    let rho = (x as f64 - cx) * c + (y as f64 - cy) * s;
                    (rho / rho_res).round() as i64 + offset as i64 == r as i64
                })
                .count() as u32;
        }
    }
    OracleAccumulator {
        n_theta,
        n_rho,
        offset,
        rho_res,
        theta_res,
        cells,
    }
}

/// `(rho_bin, theta_bin, votes)` of every cell with at least `min_votes`
/// votes that is the maximum of its 7x7 window. Windows wrap across
/// theta = 0/180 with rho mirrored. Among equal votes the cell with theta
/// nearer 90 degrees wins, then the one with rho nearer 0; cells equal on
/// both keep each other.
pub fn oracle_peaks(acc: &OracleAccumulator, min_votes: u32) -> Vec<(usize, usize, u32)> {
    let mut out = Vec::new();
    let nt = acc.n_theta as i64;
    for t in 0..acc.n_theta {
        for r in 0..acc.n_rho {
            let v = acc.cells[t][r];
            if v < min_votes {
                continue;
            }
            let mut is_peak = true;
            'win: for dt in -3i64..=3 {
                for dr in -3i64..=3 {
                    if dt == 0 && dr == 0 {
                        continue;
                    }
                    let (mut tt, mut rr) = (t as i64 + dt, r as i64 + dr);
                    if tt < 0 || tt >= nt {
                        tt = (tt + nt) % nt;
                        rr = 2 * acc.offset as i64 - rr;
                    }
                    if rr < 0 || rr >= acc.n_rho as i64 {
                        continue;
                    }
                    let nv = acc.cells[tt as usize][rr as usize];
                    let key = |t: i64, r: i64| ((t - nt / 2).abs(), (r - acc.offset as i64).abs());
                    let preferred = key(tt, rr) < key(t as i64, r as i64);
                    if nv > v || (nv == v && preferred) {
                        is_peak = false;
                        break 'win;
                    }
                }
            }
            if is_peak {
                out.push((r, t, v));
            }
        }
    }
    out
}

/// Gray image with the half plane `x cos(theta) + y sin(theta) >= rho` white.
pub fn half_plane(w: usize, h: usize, rho: f64, theta_deg: f64) -> Image {
    let (c, s) = (theta_deg.to_radians().cos(), theta_deg.to_radians().sin());
    let mut img = Image::filled(w, h, 1, 0);
    for y in 0..h {
        for x in 0..w {
            if x as f64 * c + y as f64 * s >= rho {
                img.set_gray(x, y, 255);
            }
        }
    }
    img
}

/// Exact `P(B <= k)` for `B ~ Binomial(n, 1/2)` as a rational with
/// denominator `2^n`, using 128-bit integers (n <= 120).
pub fn binomial_half_cdf_exact(n: u32, k: u32) -> (u128, u128) {
    assert!(n <= 120);
    let mut c: u128 = 1;
    let mut sum: u128 = 0;
    for i in 0..=k.min(n) {
        if i > 0 {
            c = c * (n - i + 1) as u128 / i as u128;
        }
        sum += c;
    }
    (sum, 1u128 << n)
}

/// Largest `j` in `1..=n/2` with `P(B <= j - 1) <= 0.025`, decided in exact
/// integer arithmetic.
pub fn median_ci_rank(n: u32) -> Option<u32> {
    (1..=n / 2).rev().find(|&j| {
        let (num, den) = binomial_half_cdf_exact(n, j - 1);
        // num / den <= 1 / 40
        num * 40 <= den
    })
}

pub mod trace;
