use crate::error::Result;
use crate::image::{Image, QuantizedImage};

/// `floor(v * K)` clamped into `0..K`. Inputs are clamped to `[0, 1]` first.
pub fn quantize_value(v: f64, levels: usize) -> u16 {
    let l = (v.clamp(0.0, 1.0) * levels as f64).floor() as usize;
    l.min(levels - 1) as u16
}

pub fn quantize(img: &Image, levels: usize) -> Result<QuantizedImage> {
    QuantizedImage::new(
        img.height,
        img.width,
        img.channels,
        levels,
        img.data.iter().map(|&v| quantize_value(v, levels)).collect(),
    )
}

pub fn dequantize(q: &QuantizedImage) -> Image {
    q.dequantize()
}
