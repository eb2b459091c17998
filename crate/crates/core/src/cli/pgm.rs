//! Binary greyscale (`P5`) export.

use crate::error::{LanError, Result};
use crate::tensor::Tensor;

/// `round(255 v)` with halves rounded up, clamped to `0..=255`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn encode_pgm(width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| quantize(v)));
    out
}

/// Image view of a map: `(H,W)` as is, `(C,H,W)` by its first channel
/// (masks are shared across channels), `(d)` as a single row.
pub(crate) fn image_of(map: &Tensor) -> Result<(usize, usize, &[f32])> {
    match *map.shape() {
        [d] => Ok((d, 1, map.data())),
        [h, w] => Ok((w, h, map.data())),
        [_, h, w] => Ok((w, h, &map.data()[..h * w])),
        _ => Err(LanError::shape("render", format!("cannot draw a map of shape {:?}", map.shape()))),
    }
}
