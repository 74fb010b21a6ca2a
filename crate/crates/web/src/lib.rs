//! WebAssembly bindings for the static demo page in `www/`.

use pixrec::data::glyphs::render_glyph;
use pixrec::data::{bicubic_resize, quantize, resize, ResampleKernel};
use pixrec::eval::{bicubic_baseline, consistency};
use pixrec::image::{Image, QuantizedImage};
use pixrec::nn::{build_mask, MaskKind, MaskSpec};
use pixrec::sampler::{inverse_cdf, temper, uniform_at};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Which `(ky, kx, input channel)` taps feed output channel group `group`
/// of a masked `kernel x kernel` convolution over `channels` color channels.
/// Row-major over `ky, kx, c`; 1 = connected.
#[wasm_bindgen]
pub fn mask_pattern(kind_a: bool, kernel: usize, channels: usize, group: usize) -> Result<Vec<u8>, JsValue> {
    if group >= channels {
        return Err(js_err(format!("group {group} out of range for {channels} channels")));
    }
    let kind = if kind_a { MaskKind::A } else { MaskKind::B };
    let m = build_mask(&MaskSpec::new(kind, kernel, channels, channels, channels)).map_err(js_err)?;
    let d = m.data();
    let mut out = Vec::with_capacity(kernel * kernel * channels);
    for tap in 0..kernel * kernel {
        for ci in 0..channels {
            out.push(d[(tap * channels + ci) * channels + group] as u8);
        }
    }
    Ok(out)
}

/// `p^(1/tau)` renormalised.
#[wasm_bindgen]
pub fn tempered(p: Vec<f64>, tau: f64) -> Result<Vec<f64>, JsValue> {
    let total: f64 = p.iter().sum();
    if p.is_empty() || total <= 0.0 || p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(js_err("need non-negative finite weights with a positive sum"));
    }
    let norm: Vec<f64> = p.iter().map(|v| v / total).collect();
    temper(&norm, tau).map_err(js_err)
}

/// Histogram of `draws` samples from the tempered distribution, using the
/// sampler's own uniform stream.
#[wasm_bindgen]
pub fn sample_counts(p: Vec<f64>, tau: f64, seed: u64, draws: usize) -> Result<Vec<u32>, JsValue> {
    let q = tempered(p, tau)?;
    let mut counts = vec![0u32; q.len()];
    for i in 0..draws {
        counts[inverse_cdf(&q, uniform_at(seed, 0, i))] += 1;
    }
    Ok(counts)
}

/// A rendered glyph, its bicubic downsample and two upsamples of that
/// downsample, with their consistency scores.
#[wasm_bindgen]
pub struct ResampleDemo {
    size: usize,
    factor: usize,
    high: Vec<u8>,
    low: Vec<u8>,
    bicubic: Vec<u8>,
    nearest: Vec<u8>,
    consistency_truth: f64,
    consistency_bicubic: f64,
    consistency_nearest: f64,
}

fn gray(q: &QuantizedImage) -> Vec<u8> {
    let k1 = (q.levels - 1) as f64;
    q.data.iter().map(|&l| (l as f64 * 255.0 / k1).round() as u8).collect()
}

#[wasm_bindgen]
impl ResampleDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(digit: usize, seed: u64, size: usize, factor: usize, levels: usize) -> Result<ResampleDemo, JsValue> {
        if digit > 9 || factor == 0 || size == 0 || size % factor != 0 || !(2..=256).contains(&levels) {
            return Err(js_err("need digit 0-9, size divisible by factor, 2 <= levels <= 256"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glyph = render_glyph(digit, &mut rng);
        let hr: Image = bicubic_resize(&glyph, size, size, ResampleKernel::CATMULL_ROM, (0.0, 1.0));
        let high = quantize(&hr, levels).map_err(js_err)?;
        let lr = size / factor;
        let low = quantize(
            &bicubic_resize(&high.dequantize(), lr, lr, ResampleKernel::CATMULL_ROM, (0.0, 1.0)),
            levels,
        )
        .map_err(js_err)?;
        let bicubic = bicubic_baseline(&low, factor).map_err(js_err)?;
        let nearest = quantize(&resize(&low.dequantize(), size, size, ResampleKernel::Nearest), levels).map_err(js_err)?;
        Ok(Self {
            size,
            factor,
            consistency_truth: consistency(&low, &high).map_err(js_err)?,
            consistency_bicubic: consistency(&low, &bicubic).map_err(js_err)?,
            consistency_nearest: consistency(&low, &nearest).map_err(js_err)?,
            high: gray(&high),
            low: gray(&low),
            bicubic: gray(&bicubic),
            nearest: gray(&nearest),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn low_size(&self) -> usize {
        self.size / self.factor
    }

    pub fn high(&self) -> Vec<u8> {
        self.high.clone()
    }

    pub fn low(&self) -> Vec<u8> {
        self.low.clone()
    }

    pub fn bicubic(&self) -> Vec<u8> {
        self.bicubic.clone()
    }

    pub fn nearest(&self) -> Vec<u8> {
        self.nearest.clone()
    }

    pub fn consistency_truth(&self) -> f64 {
        self.consistency_truth
    }

    pub fn consistency_bicubic(&self) -> f64 {
        self.consistency_bicubic
    }

    pub fn consistency_nearest(&self) -> f64 {
        self.consistency_nearest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_a_centre_excludes_own_channel() {
        // 3x3, RGB, output group G: centre taps see R only.
        let m = mask_pattern(true, 3, 3, 1).unwrap();
        let centre = &m[4 * 3..5 * 3];
        assert_eq!(centre, &[1, 0, 0]);
        assert!(m[..4 * 3].iter().all(|&v| v == 1));
        assert!(m[5 * 3..].iter().all(|&v| v == 0));
        let b = mask_pattern(false, 3, 3, 1).unwrap();
        assert_eq!(&b[4 * 3..5 * 3], &[1, 1, 0]);
    }

    #[test]
    fn tempering_and_counts() {
        let q = tempered(vec![8.0, 2.0], 0.5).unwrap();
        assert!((q[0] - 0.941176).abs() < 1e-6);
        let c = sample_counts(vec![1.0, 1.0, 2.0], 1.0, 3, 4000).unwrap();
        assert_eq!(c.iter().sum::<u32>(), 4000);
        assert!((c[2] as f64 / 4000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn resample_demo_orders_consistency() {
        let d = ResampleDemo::new(3, 1, 16, 2, 256).unwrap();
        assert_eq!(d.high().len(), 256);
        assert_eq!(d.low().len(), 64);
        assert!(d.consistency_bicubic() <= 0.01);
        assert!(d.consistency_truth() < 1e-4);
    }
}
