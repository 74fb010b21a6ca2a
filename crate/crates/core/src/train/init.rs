use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{ModelBundle, ModelConfig};

pub const INIT_STD: f64 = 0.1;

/// Zero-mean normal with samples beyond two standard deviations redrawn.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedNormal {
    normal: Normal<f64>,
    bound: f64,
}

impl TruncatedNormal {
    pub fn new(std: f64) -> Self {
        Self {
            normal: Normal::new(0.0, std).expect("finite std"),
            bound: 2.0 * std.abs(),
        }
    }
}

impl Distribution<f64> for TruncatedNormal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let s = self.normal.sample(rng);
            if s.abs() <= self.bound {
                return s;
            }
        }
    }
}

/// Weights from a normal with `std`, redrawn outside `+-2 std`; biases
/// (names ending in `.b`) zero; masked kernel entries zero.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelBundle> {
    init_params_with(config, seed, INIT_STD)
}

pub fn init_params_with(config: &ModelConfig, seed: u64, std: f64) -> Result<ModelBundle> {
    let mut bundle = ModelBundle::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = TruncatedNormal::new(std);
    let names: Vec<String> = bundle.params.names().map(str::to_string).collect();
    for name in names {
        if name.ends_with(".b") {
            continue;
        }
        let mask = bundle.params.mask(&name).cloned();
        let t = bundle.params.get_mut(&name)?;
        for v in t.data_mut() {
            *v = dist.sample(&mut rng);
        }
        if let Some(m) = mask {
            t.data_mut().iter_mut().zip(m.data()).for_each(|(v, m)| *v *= m);
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    #[test]
    fn truncated_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = TruncatedNormal::new(0.1);
        let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(xs.iter().all(|x| x.abs() <= 0.2));
        assert!((var.sqrt() - 0.088).abs() < 0.01, "{}", var.sqrt());
    }

    #[test]
    fn biases_zero_weights_bounded_and_masked() {
        let cfg = ModelConfig {
            channels: 1,
            levels: 4,
            in_h: 4,
            in_w: 4,
            upsample_stages: 1,
            cond_width: 4,
            cond_blocks: 1,
            prior_width: 4,
            prior_blocks: 1,
            prior_first_kernel: 3,
            prior_kernel: 3,
            prior_head: 4,
            ..ModelConfig::default()
        };
        let b = init_params(&cfg, 3).unwrap();
        assert_eq!(b.kind(), ModelKind::PixelRecursive);
        for (name, t) in b.params.iter() {
            if name.ends_with(".b") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            } else {
                assert!(t.data().iter().all(|v| v.abs() <= 0.2), "{name}");
            }
            if let Some(m) = b.params.mask(name) {
                for (v, m) in t.data().iter().zip(m.data()) {
                    if *m == 0.0 {
                        assert_eq!(*v, 0.0);
                    }
                }
            }
        }
        assert_eq!(init_params(&cfg, 3).unwrap(), b);
        assert_ne!(init_params(&cfg, 4).unwrap(), b);
    }
}
