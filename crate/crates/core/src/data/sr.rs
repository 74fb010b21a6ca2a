//! Small glyph super-resolution task: high-resolution targets are glyphs at
//! random scale and offset; inputs are their bicubic downsamples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quant::quantize;
use super::resample::{bicubic_resize, ResampleKernel};
use super::{Pair, PairedDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphSrConfig {
    pub hr_size: usize,
    pub factor: usize,
    pub levels: usize,
}

impl Default for GlyphSrConfig {
    fn default() -> Self {
        Self {
            hr_size: 16,
            factor: 2,
            levels: 8,
        }
    }
}

/// Low-resolution input for a high-resolution target.
pub fn downsample_pair(target: &Image, cfg: &GlyphSrConfig) -> Image {
    let lr = cfg.hr_size / cfg.factor;
    bicubic_resize(target, lr, lr, ResampleKernel::CATMULL_ROM, (0.0, 1.0))
}

pub fn gen_glyph_sr(source: &[Image], cfg: &GlyphSrConfig, count: usize, seed: u64, split: Split) -> Result<PairedDataset> {
    if source.is_empty() || cfg.factor == 0 || cfg.hr_size % cfg.factor != 0 {
        return Err(Error::Config("glyph SR needs sources and hr_size divisible by factor".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5352_0000 + split as u64);
    let hr = cfg.hr_size;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let glyph = &source[rng.random_range(0..source.len())];
        let size = rng.random_range(hr * 5 / 8..=hr);
        let top = rng.random_range(0..=hr - size);
        let left = rng.random_range(0..=hr - size);
        let scaled = bicubic_resize(glyph, size, size, ResampleKernel::CATMULL_ROM, (0.0, 1.0));
        let mut canvas = Image::filled(hr, hr, 1, 0.0);
        for y in 0..size {
            for x in 0..size {
                *canvas.at_mut(top + y, left + x, 0) = scaled.at(y, x, 0);
            }
        }
        let target = quantize(&canvas, cfg.levels)?;
        let input = quantize(&downsample_pair(&target.dequantize(), cfg), cfg.levels)?;
        pairs.push(Pair { input, target });
    }
    Ok(PairedDataset { split, pairs })
}
