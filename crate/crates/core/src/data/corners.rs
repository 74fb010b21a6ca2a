//! The two-mode "digit in a corner" benchmark.
//!
//! The conditioning input is the digit centered on the canvas (optionally
//! downsampled to `input_size`); the target is the same digit flush against
//! either the top-left or the bottom-right corner, chosen by a fair coin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quant::quantize;
use super::resample::{bicubic_resize, ResampleKernel};
use super::{Pair, PairedDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corner {
    TopLeft,
    BottomRight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornersConfig {
    pub canvas: usize,
    pub digit_size: usize,
    pub input_size: usize,
    pub levels: usize,
}

impl Default for CornersConfig {
    fn default() -> Self {
        Self {
            canvas: 32,
            digit_size: 16,
            input_size: 16,
            levels: 4,
        }
    }
}

impl CornersConfig {
    pub fn validate(&self) -> Result<()> {
        if self.digit_size == 0 || self.canvas < 2 * self.digit_size {
            return Err(Error::Config(format!(
                "canvas {} must be at least twice the digit extent {}",
                self.canvas, self.digit_size
            )));
        }
        if self.input_size == 0 || self.input_size > self.canvas {
            return Err(Error::Config(format!("input size {} invalid for canvas {}", self.input_size, self.canvas)));
        }
        if self.levels < 2 {
            return Err(Error::Config("need at least 2 levels".into()));
        }
        Ok(())
    }
}

fn paste(canvas: usize, digit: &Image, top: usize, left: usize) -> Image {
    let mut out = Image::filled(canvas, canvas, 1, 0.0);
    for y in 0..digit.height {
        for x in 0..digit.width {
            *out.at_mut(top + y, left + x, 0) = digit.at(y, x, 0);
        }
    }
    out
}

/// Ink below this value does not count towards a digit's bounding box.
const INK: f64 = 0.1;

/// Crops to the ink bounding box; an empty digit is returned unchanged.
fn crop_to_ink(digit: &Image) -> Image {
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for y in 0..digit.height {
        for x in 0..digit.width {
            if digit.at(y, x, 0) > INK {
                (y0, y1, x0, x1) = (y0.min(y), y1.max(y), x0.min(x), x1.max(x));
            }
        }
    }
    if y0 == usize::MAX {
        return digit.clone();
    }
    let (h, w) = (y1 - y0 + 1, x1 - x0 + 1);
    let data = (0..h * w).map(|i| digit.at(y0 + i / w, x0 + i % w, 0)).collect();
    Image::new(h, w, 1, data).expect("crop within bounds")
}

/// Builds one pair from a `[0, 1]` grayscale digit with the corner forced.
/// The digit is cropped to its ink and scaled (aspect kept) so its longer
/// side is `digit_size`, then placed flush against the chosen corner.
pub fn corners_pair(digit: &Image, cfg: &CornersConfig, corner: Corner) -> Result<Pair> {
    cfg.validate()?;
    let d = cfg.digit_size;
    let ink = crop_to_ink(digit);
    let long = ink.height.max(ink.width);
    let (h, w) = ((ink.height * d).div_ceil(long).max(1), (ink.width * d).div_ceil(long).max(1));
    let scaled = bicubic_resize(&ink, h, w, ResampleKernel::CATMULL_ROM, (0.0, 1.0));
    let centered = paste(cfg.canvas, &scaled, (cfg.canvas - h) / 2, (cfg.canvas - w) / 2);
    let input = if cfg.input_size == cfg.canvas {
        centered
    } else {
        bicubic_resize(&centered, cfg.input_size, cfg.input_size, ResampleKernel::CATMULL_ROM, (0.0, 1.0))
    };
    let (top, left) = match corner {
        Corner::TopLeft => (0, 0),
        Corner::BottomRight => (cfg.canvas - h, cfg.canvas - w),
    };
    let target = paste(cfg.canvas, &scaled, top, left);
    Ok(Pair {
        input: quantize(&input, cfg.levels)?,
        target: quantize(&target, cfg.levels)?,
    })
}

/// Seeded dataset plus the corner drawn for every sample.
pub fn gen_corners_labeled(
    source: &[Image],
    cfg: &CornersConfig,
    count: usize,
    seed: u64,
    split: Split,
) -> Result<(PairedDataset, Vec<Corner>)> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Data("no source digits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split as u64);
    let mut pairs = Vec::with_capacity(count);
    let mut corners = Vec::with_capacity(count);
    for _ in 0..count {
        let digit = &source[rng.random_range(0..source.len())];
        let corner = if rng.random::<bool>() {
            Corner::TopLeft
        } else {
            Corner::BottomRight
        };
        pairs.push(corners_pair(digit, cfg, corner)?);
        corners.push(corner);
    }
    Ok((PairedDataset { split, pairs }, corners))
}

pub fn gen_mnist_corners(source: &[Image], cfg: &CornersConfig, count: usize, seed: u64, split: Split) -> Result<PairedDataset> {
    gen_corners_labeled(source, cfg, count, seed, split).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::glyphs::synthetic_digits;

    fn digits(n: usize) -> Vec<Image> {
        synthetic_digits(n, 11).into_iter().map(|(i, _)| i).collect()
    }

    #[test]
    fn forced_corner_mass_stays_in_quadrant() {
        let cfg = CornersConfig::default();
        for d in digits(5) {
            let tl = corners_pair(&d, &cfg, Corner::TopLeft).unwrap();
            let br = corners_pair(&d, &cfg, Corner::BottomRight).unwrap();
            for y in 0..32 {
                for x in 0..32 {
                    if tl.target.at(y, x, 0) > 0 {
                        assert!(y < 16 && x < 16);
                    }
                    if br.target.at(y, x, 0) > 0 {
                        assert!(y >= 16 && x >= 16);
                    }
                }
            }
            assert!(tl.target.data.iter().any(|&v| v > 0));
            // Flush: ink on the outer row or column of each corner.
            let ink = |y: usize, x: usize, p: &Pair| p.target.at(y, x, 0) > 0;
            assert!((0..16).any(|i| ink(0, i, &tl) || ink(i, 0, &tl)));
            assert!((16..32).any(|i| ink(31, i, &br) || ink(i, 31, &br)));
            assert_eq!(tl.input, br.input);
            assert_eq!(tl.input.height, 16);
        }
    }

    #[test]
    fn canvas_too_small_is_rejected() {
        let cfg = CornersConfig {
            canvas: 20,
            ..Default::default()
        };
        assert!(matches!(corners_pair(&digits(1)[0], &cfg, Corner::TopLeft), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_bytes() {
        let src = digits(8);
        let cfg = CornersConfig::default();
        let a = gen_mnist_corners(&src, &cfg, 12, 5, Split::Train).unwrap();
        let b = gen_mnist_corners(&src, &cfg, 12, 5, Split::Train).unwrap();
        assert_eq!(a, b);
        let c = gen_mnist_corners(&src, &cfg, 12, 5, Split::Valid).unwrap();
        assert_ne!(a.pairs, c.pairs);
    }
}
