use super::{Image, VisionError};
use crate::nn::Tensor;

pub const CAMERA_WIDTH: usize = 640;
pub const CAMERA_HEIGHT: usize = 480;
pub const RESIZED_WIDTH: usize = 128;
pub const RESIZED_HEIGHT: usize = 96;
/// First row of the resized image kept by the lower-half crop.
pub const CROP_TOP: usize = 48;
pub const CROP_HEIGHT: usize = RESIZED_HEIGHT - CROP_TOP;

/// Bilinear resize with pixel-centre alignment and edge clamping. Returns
/// interleaved `f32` samples with the source channel count.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Vec<f32> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let data = img.data();
    let mut out = Vec::with_capacity(out_w * out_h * c);
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let p = |x: usize, y: usize| data[(y * w + x) * c + ch] as f64;
                let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
                let bot = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
                out.push((top * (1.0 - wy) + bot * wy) as f32);
            }
        }
    }
    out
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn check_camera_frame(frame: &Image) -> Result<(), VisionError> {
    if frame.width() != CAMERA_WIDTH || frame.height() != CAMERA_HEIGHT || frame.channels() != 3 {
        return Err(VisionError::FrameShape {
            width: frame.width(),
            height: frame.height(),
            channels: frame.channels(),
        });
    }
    Ok(())
}

/// 640x480 RGB camera frame to the 128x48 grayscale lower-half lane view.
pub fn preprocess(frame: &Image) -> Result<Image, VisionError> {
    check_camera_frame(frame)?;
    let resized = resize_bilinear(frame, RESIZED_WIDTH, RESIZED_HEIGHT);
    let data = resized
        .chunks_exact(3)
        .skip(CROP_TOP * RESIZED_WIDTH)
        .map(|p| luma(p[0], p[1], p[2]).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::new(RESIZED_WIDTH, CROP_HEIGHT, 1, data)
}

/// Encoder input: the same resize and crop, kept in colour, as a
/// `[3, 48, 128]` tensor scaled to `[0, 1]`. An image that is already the
/// 128x48 RGB crop is converted directly.
pub fn encoder_input(frame: &Image) -> Result<Tensor, VisionError> {
    let interleaved: Vec<f32> =
        if frame.width() == RESIZED_WIDTH && frame.height() == CROP_HEIGHT && frame.channels() == 3
        {
            frame.data().iter().map(|&v| v as f32).collect()
        } else {
            check_camera_frame(frame)?;
            let resized = resize_bilinear(frame, RESIZED_WIDTH, RESIZED_HEIGHT);
            resized[CROP_TOP * RESIZED_WIDTH * 3..]
                .iter()
                .map(|v| v.round().clamp(0.0, 255.0))
                .collect()
        };
    let plane = RESIZED_WIDTH * CROP_HEIGHT;
    let mut chw = vec![0.0f32; 3 * plane];
    for (i, px) in interleaved.chunks_exact(3).enumerate() {
        for ch in 0..3 {
            chw[ch * plane + i] = px[ch] / 255.0;
        }
    }
    Ok(Tensor::new(vec![3, CROP_HEIGHT, RESIZED_WIDTH], chw).expect("fixed shape"))
}

/// Pixels at or above `lo` become 255, everything else 0.
pub fn white_mask(img: &Image, lo: u8) -> Result<Image, VisionError> {
    if !img.is_gray() {
        return Err(VisionError::Channels(img.channels()));
    }
    let data = img
        .data()
        .iter()
        .map(|&v| if v >= lo { 255 } else { 0 })
        .collect();
    Image::new(img.width(), img.height(), 1, data)
}
