//! Raster-order, channel-sequential decoding from the fused distribution.
//!
//! Randomness: image `n` of a plan draws from ChaCha8 seeded with the plan
//! seed on stream `n`; sub-pixel `i` consumes exactly the 64-bit word at
//! position `i`, so every draw is addressable independently of decode order.

mod incremental;

pub use incremental::IncrementalPrior;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::quantize;
use crate::error::{Error, Result};
use crate::image::QuantizedImage;
use crate::model::{ModelBundle, ModelKind};
use crate::tensor::{softmax_into, softmax_slice};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    /// Argmax with ties to the lowest level.
    Greedy,
    /// Draw from `softmax(logits / tau)`.
    Tempered(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePlan {
    pub mode: Mode,
    pub seed: u64,
    pub num_samples: usize,
}

impl SamplePlan {
    pub fn greedy() -> Self {
        Self {
            mode: Mode::Greedy,
            seed: 0,
            num_samples: 1,
        }
    }

    pub fn tempered(tau: f64, seed: u64, num_samples: usize) -> Self {
        Self {
            mode: Mode::Tempered(tau),
            seed,
            num_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Mode::Tempered(tau) = self.mode {
            check_tau(tau)?;
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Param(format!("temperature must be positive and finite, got {tau}")));
    }
    Ok(())
}

/// `p^(1/tau)` renormalised, evaluated as `softmax(ln p / tau)`.
pub fn temper(p: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let logits: Vec<f64> = p.iter().map(|v| v.ln() / tau).collect();
    Ok(softmax_slice(&logits))
}

/// `softmax(logits / tau)`.
pub fn temper_logits(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let z: Vec<f64> = logits.iter().map(|v| v / tau).collect();
    Ok(softmax_slice(&z))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw: the first level whose cumulative probability exceeds
/// `u`. Rounding shortfall falls back to the last level with mass.
pub fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        cum += pk;
        if u < cum {
            return k;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Uniform in `[0, 1)` for sub-pixel `i` of image `image` under `seed`.
pub fn uniform_at(seed: u64, image: u64, i: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(image);
    rng.set_word_pos(2 * i as u128);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct Chooser {
    mode: Mode,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
    z: Vec<f64>,
}

impl Chooser {
    fn new(mode: Mode, seed: u64, image: u64, levels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(image);
        Self {
            mode,
            rng,
            probs: vec![0.0; levels],
            z: vec![0.0; levels],
        }
    }

    /// Level for sub-pixel `i` from conditioning and prior logits.
    fn choose(&mut self, i: usize, a: &[f64], b: Option<&[f64]>) -> u16 {
        for (k, z) in self.z.iter_mut().enumerate() {
            *z = match b {
                Some(b) => a[k] + b[k],
                None => a[k],
            };
        }
        let level = match self.mode {
            Mode::Greedy => argmax(&self.z),
            Mode::Tempered(tau) => {
                self.z.iter_mut().for_each(|v| *v /= tau);
                softmax_into(&self.z, &mut self.probs);
                self.rng.set_word_pos(2 * i as u128);
                let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                inverse_cdf(&self.probs, u)
            }
        };
        level as u16
    }
}

/// Decodes `plan.num_samples` images. Image `n` uses RNG stream `n`.
pub fn sample_image(bundle: &ModelBundle, x: &QuantizedImage, plan: &SamplePlan) -> Result<Vec<QuantizedImage>> {
    plan.validate()?;
    (0..plan.num_samples)
        .map(|n| decode_one(bundle, x, plan.mode, plan.seed, n as u64))
        .collect()
}

pub fn greedy_decode(bundle: &ModelBundle, x: &QuantizedImage) -> Result<QuantizedImage> {
    decode_one(bundle, x, Mode::Greedy, 0, 0)
}

/// Decodes a single image on RNG stream `image`.
pub fn decode_one(bundle: &ModelBundle, x: &QuantizedImage, mode: Mode, seed: u64, image: u64) -> Result<QuantizedImage> {
    let cfg = &bundle.config;
    let (h, w, c, k) = (cfg.out_h(), cfg.out_w(), cfg.channels, cfg.levels);
    if bundle.kind() == ModelKind::Regression {
        bundle.check_input(x)?;
        return quantize(&bundle.predict_regression(x)?, k);
    }
    let (a, feats) = bundle.conditioning(x)?;
    let mut out = QuantizedImage::zeros(h, w, c, k);
    let mut chooser = Chooser::new(mode, seed, image, k);
    match bundle.kind() {
        ModelKind::PixelCe => {
            for i in 0..out.sub_pixels() {
                out.data[i] = chooser.choose(i, a.row(i), None);
            }
        }
        _ => {
            let mut prior = IncrementalPrior::new(bundle, &feats)?;
            for oy in 0..h {
                for ox in 0..w {
                    for ch in 0..c {
                        let i = (oy * w + ox) * c + ch;
                        let logits = prior.compute(oy, ox);
                        let level = chooser.choose(i, a.row(i), Some(&logits[ch * k..(ch + 1) * k]));
                        out.data[i] = level;
                        prior.set(i, level);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reference decoder: a full prior forward pass for every sub-pixel.
pub fn decode_brute_force(bundle: &ModelBundle, x: &QuantizedImage, mode: Mode, seed: u64, image: u64) -> Result<QuantizedImage> {
    if bundle.kind() != ModelKind::PixelRecursive {
        return decode_one(bundle, x, mode, seed, image);
    }
    let cfg = &bundle.config;
    let (a, feats) = bundle.conditioning(x)?;
    let mut y = QuantizedImage::zeros(cfg.out_h(), cfg.out_w(), cfg.channels, cfg.levels);
    let mut chooser = Chooser::new(mode, seed, image, cfg.levels);
    for i in 0..y.sub_pixels() {
        let b = bundle.prior_with_features(&feats, &y)?;
        y.data[i] = chooser.choose(i, a.row(i), Some(b.row(i)));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temper_examples() {
        let p = [0.1, 0.25, 0.4, 0.25];
        for (a, b) in temper(&p, 1.0).unwrap().iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(temper(&[0.5, 0.5], 0.3).unwrap().iter().all(|v| (v - 0.5).abs() < 1e-15));
        let t = temper(&[0.8, 0.2], 0.5).unwrap();
        assert!((t[0] - 0.941176).abs() < 1e-6 && (t[1] - 0.058824).abs() < 1e-6);
        assert!((t[0] - 0.64 / 0.68).abs() < 1e-12);
        assert!(matches!(temper(&p, 0.0), Err(Error::Param(_))));
        assert!(matches!(temper(&p, -1.0), Err(Error::Param(_))));
        assert!(SamplePlan::tempered(f64::NAN, 0, 1).validate().is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn inverse_cdf_edges() {
        let p = [0.25, 0.0, 0.75];
        assert_eq!(inverse_cdf(&p, 0.0), 0);
        assert_eq!(inverse_cdf(&p, 0.25), 2);
        assert_eq!(inverse_cdf(&p, 0.999_999), 2);
        assert_eq!(inverse_cdf(&[0.5, 0.49, 0.0], 0.995), 1);
    }

    #[test]
    fn chooser_draw_matches_addressable_uniform() {
        let mut c = Chooser::new(Mode::Tempered(1.0), 42, 3, 2);
        for i in [5usize, 0, 17] {
            let u = uniform_at(42, 3, i);
            let expected = if u < 0.5 { 0 } else { 1 };
            assert_eq!(c.choose(i, &[0.0, 0.0], None), expected);
        }
    }
}
