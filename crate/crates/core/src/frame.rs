use std::sync::Arc;

use crate::vision::Image;

/// A camera frame as it travels over the bus.
///
/// Images are shared, not copied, between subscribers. Frames produced by the
/// simulator also carry the ground-truth vehicle position at capture time;
/// the oracle scorer uses it and the renderer can produce the image lazily
/// from it.
#[derive(Debug, Clone)]
pub struct Frame {
    pub seq: u64,
    pub capture_ns: u64,
    pub vehicle_x: Option<f64>,
    pub image: Option<Arc<Image>>,
}

impl Frame {
    pub fn from_image(seq: u64, capture_ns: u64, image: Image) -> Self {
        Self {
            seq,
            capture_ns,
            vehicle_x: None,
            image: Some(Arc::new(image)),
        }
    }
}
