//! Image-quality metrics, the corner-exclusivity classifier, non-neural
//! baselines and metric reports.

mod metrics;

pub use metrics::{
    gaussian_taps, ms_ssim, ms_ssim_scales, ms_ssim_scales_n, ms_ssim_window, psnr, ssim, ssim_plane, ssim_window,
    Plane, MS_SSIM_MIN_SIDE, MS_SSIM_WEIGHTS, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};

use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::data::quantize;
use crate::data::resample::{bicubic_resize, ResampleKernel};
use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::image::QuantizedImage;

/// Integer downscale factor between a low- and high-resolution image.
fn factor(x: &QuantizedImage, y: &QuantizedImage) -> Result<usize> {
    let ok = x.height > 0
        && y.height % x.height == 0
        && y.width % x.width == 0
        && y.height / x.height == y.width / x.width
        && x.channels == y.channels;
    if !ok {
        return Err(Error::Shape {
            op: "consistency",
            lhs: vec![x.height, x.width, x.channels],
            rhs: vec![y.height, y.width, y.channels],
        });
    }
    Ok(y.height / x.height)
}

/// MSE, on the `[0, 1]` scale, between the dequantized low-resolution input
/// and the bicubic downsample of the dequantized output.
pub fn consistency(x: &QuantizedImage, y_hat: &QuantizedImage) -> Result<f64> {
    factor(x, y_hat)?;
    let down = bicubic_resize(&y_hat.dequantize(), x.height, x.width, ResampleKernel::CATMULL_ROM, (0.0, 1.0));
    let xs = x.dequantize();
    let se: f64 = xs.data.iter().zip(&down.data).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(se / xs.data.len() as f64)
}

/// Bicubic upsample of `x` by an integer factor, quantized to `x.levels`.
pub fn bicubic_baseline(x: &QuantizedImage, factor: usize) -> Result<QuantizedImage> {
    let up = bicubic_resize(
        &x.dequantize(),
        x.height * factor,
        x.width * factor,
        ResampleKernel::CATMULL_ROM,
        (0.0, 1.0),
    );
    quantize(&up, x.levels)
}

/// Index of the training input closest to `x` in squared level distance,
/// lowest index on ties.
pub fn nearest_index(x: &QuantizedImage, train: &PairedDataset) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::Data("nearest neighbour needs a nonempty training set".into()));
    }
    let mut best = (u64::MAX, 0);
    for (i, p) in train.pairs.iter().enumerate() {
        if !p.input.same_layout(x) {
            return Err(Error::Shape {
                op: "nearest_neighbor",
                lhs: vec![x.height, x.width, x.channels],
                rhs: vec![p.input.height, p.input.width, p.input.channels],
            });
        }
        let d: u64 = x
            .data
            .iter()
            .zip(&p.input.data)
            .map(|(&a, &b)| {
                let d = a.abs_diff(b) as u64;
                d * d
            })
            .sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

/// High-resolution target of the nearest training input.
pub fn nearest_neighbor_baseline(x: &QuantizedImage, train: &PairedDataset) -> Result<QuantizedImage> {
    Ok(train.pairs[nearest_index(x, train)?].target.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerClass {
    ExclusiveTl,
    ExclusiveBr,
    Both,
    Neither,
}

impl CornerClass {
    pub fn is_exclusive(&self) -> bool {
        matches!(self, Self::ExclusiveTl | Self::ExclusiveBr)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ExclusiveTl => "exclusive_tl",
            Self::ExclusiveBr => "exclusive_br",
            Self::Both => "both",
            Self::Neither => "neither",
        }
    }
}

pub const DEFAULT_EXCLUSIVITY: f64 = 0.8;

/// Fractions of the total intensity (level values, summed over channels)
/// in the top-left and bottom-right quadrants.
pub fn corner_mass(sample: &QuantizedImage) -> (f64, f64) {
    let (hh, hw) = (sample.height / 2, sample.width / 2);
    let (mut tl, mut br, mut total) = (0.0, 0.0, 0.0);
    for y in 0..sample.height {
        for x in 0..sample.width {
            for c in 0..sample.channels {
                let v = sample.at(y, x, c) as f64;
                total += v;
                if y < hh && x < hw {
                    tl += v;
                } else if y >= sample.height - hh && x >= sample.width - hw {
                    br += v;
                }
            }
        }
    }
    if total == 0.0 {
        (0.0, 0.0)
    } else {
        (tl / total, br / total)
    }
}

/// `threshold` of the mass in one quadrant is exclusive; at least
/// `1 - threshold` in each of both quadrants is "both"; anything else,
/// including an empty canvas, is "neither".
pub fn corner_exclusivity(sample: &QuantizedImage, threshold: f64) -> CornerClass {
    let (tl, br) = corner_mass(sample);
    if tl >= threshold {
        CornerClass::ExclusiveTl
    } else if br >= threshold {
        CornerClass::ExclusiveBr
    } else if tl > 0.0 && br > 0.0 && tl >= 1.0 - threshold && br >= 1.0 - threshold {
        CornerClass::Both
    } else {
        CornerClass::Neither
    }
}

fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn ser_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => ser_f64(v, s),
        None => s.serialize_none(),
    }
}

pub fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub index: usize,
    #[serde(serialize_with = "ser_f64")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub consistency: f64,
    #[serde(serialize_with = "ser_opt")]
    pub nll_bits: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Metric constants, so numbers are comparable across runs.
    pub header: String,
    #[serde(serialize_with = "ser_f64")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub consistency: f64,
    #[serde(serialize_with = "ser_opt")]
    pub nll_bits: Option<f64>,
    pub per_image: Vec<ImageMetrics>,
}

pub fn metric_header() -> String {
    format!(
        "psnr: flattened sub-pixels, peak K-1; ssim: gaussian {SSIM_WINDOW}x{SSIM_WINDOW} sigma {SSIM_SIGMA}, k1 {SSIM_K1}, k2 {SSIM_K2}, L=K-1, valid windows, channel mean; \
         ms_ssim: weights {MS_SSIM_WEIGHTS:?} truncated to scales with side >= {MS_SSIM_MIN_SIDE} and renormalised, 2x2 average pooling; \
         consistency: MSE on [0,1] against bicubic (a=-0.5) downsample"
    )
}

impl MetricsReport {
    /// Scores `outputs[i]` against `pairs[i].target` (and `pairs[i].input`
    /// for consistency). Aggregates are plain means of the per-image values.
    pub fn compute(ds: &PairedDataset, outputs: &[QuantizedImage], nll_bits: Option<&[f64]>) -> Result<Self> {
        if outputs.len() != ds.len() || outputs.is_empty() || nll_bits.is_some_and(|n| n.len() != outputs.len()) {
            return Err(Error::Data(format!(
                "{} outputs for {} pairs",
                outputs.len(),
                ds.len()
            )));
        }
        let mut per_image = Vec::with_capacity(outputs.len());
        for (i, (p, y)) in ds.pairs.iter().zip(outputs).enumerate() {
            per_image.push(ImageMetrics {
                index: i,
                psnr_db: psnr(y, &p.target)?,
                ssim: ssim_window(y, &p.target, ms_ssim_window(y.height.min(y.width)))?,
                ms_ssim: ms_ssim(y, &p.target)?,
                consistency: consistency(&p.input, y)?,
                nll_bits: nll_bits.map(|n| n[i]),
            });
        }
        let mean = |f: &dyn Fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / per_image.len() as f64;
        Ok(Self {
            header: metric_header(),
            psnr_db: mean(&|m| m.psnr_db),
            ssim: mean(&|m| m.ssim),
            ms_ssim: mean(&|m| m.ms_ssim),
            consistency: mean(&|m| m.consistency),
            nll_bits: nll_bits.map(|_| mean(&|m| m.nll_bits.unwrap_or(0.0))),
            per_image,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.header);
        let _ = writeln!(s, "psnr_db\t{}", fmt_db(self.psnr_db));
        let _ = writeln!(s, "ssim\t{:.6}", self.ssim);
        let _ = writeln!(s, "ms_ssim\t{:.6}", self.ms_ssim);
        let _ = writeln!(s, "consistency\t{:.6}", self.consistency);
        if let Some(n) = self.nll_bits {
            let _ = writeln!(s, "nll_bits\t{n:.6}");
        }
        for m in &self.per_image {
            let _ = write!(
                s,
                "image {}\tpsnr_db {}\tssim {:.6}\tms_ssim {:.6}\tconsistency {:.6}",
                m.index,
                fmt_db(m.psnr_db),
                m.ssim,
                m.ms_ssim,
                m.consistency
            );
            if let Some(n) = m.nll_bits {
                let _ = write!(s, "\tnll_bits {n:.6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Pair;

    fn img(h: usize, w: usize, k: usize, f: impl Fn(usize, usize) -> u16) -> QuantizedImage {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        QuantizedImage::new(h, w, 1, k, data).unwrap()
    }

    #[test]
    fn exclusivity_cases() {
        let tl = img(8, 8, 4, |y, x| if y < 3 && x < 3 { 3 } else { 0 });
        assert_eq!(corner_exclusivity(&tl, 0.8), CornerClass::ExclusiveTl);
        let br = img(8, 8, 4, |y, x| if y > 5 && x > 4 { 2 } else { 0 });
        assert_eq!(corner_exclusivity(&br, 0.8), CornerClass::ExclusiveBr);
        let both = img(8, 8, 4, |y, x| if (y < 2 && x < 2) || (y > 5 && x > 5) { 3 } else { 0 });
        assert_eq!(corner_exclusivity(&both, 0.8), CornerClass::Both);
        let off_diagonal = img(8, 8, 4, |y, x| if y < 3 && x > 5 { 3 } else { 0 });
        assert_eq!(corner_exclusivity(&off_diagonal, 0.8), CornerClass::Neither);
        let split = img(8, 8, 4, |y, x| if y < 4 && x < 4 { 3 } else if y < 4 { 1 } else { 0 });
        assert_eq!(corner_exclusivity(&split, 0.8), CornerClass::Neither);
        assert_eq!(corner_exclusivity(&QuantizedImage::zeros(8, 8, 1, 4), 0.8), CornerClass::Neither);
    }

    #[test]
    fn nearest_neighbour_ties_and_identity() {
        let mk = |v: u16, t: u16| Pair {
            input: img(2, 2, 8, |_, _| v),
            target: img(4, 4, 8, |_, _| t),
        };
        let ds = PairedDataset {
            split: crate::data::Split::Train,
            pairs: vec![mk(1, 10 % 8), mk(3, 5), mk(5, 6), mk(3, 7)],
        };
        assert_eq!(nearest_index(&img(2, 2, 8, |_, _| 3), &ds).unwrap(), 1);
        assert_eq!(nearest_index(&img(2, 2, 8, |_, _| 4), &ds).unwrap(), 1);
        assert_eq!(nearest_neighbor_baseline(&img(2, 2, 8, |_, _| 5), &ds).unwrap(), ds.pairs[2].target);
    }

    #[test]
    fn consistency_zero_for_constant_images() {
        let x = img(4, 4, 8, |_, _| 3);
        let y = img(8, 8, 8, |_, _| 3);
        assert!(consistency(&x, &y).unwrap() < 1e-20);
        assert!(consistency(&x, &img(8, 6, 8, |_, _| 3)).is_err());
    }

    #[test]
    fn report_serialises_inf() {
        let y = img(16, 16, 4, |y, x| ((y + x) % 4) as u16);
        let ds = PairedDataset {
            split: crate::data::Split::Test,
            pairs: vec![Pair {
                input: img(8, 8, 4, |_, _| 1),
                target: y.clone(),
            }],
        };
        let r = MetricsReport::compute(&ds, &[y], Some(&[1.5])).unwrap();
        assert_eq!(r.psnr_db, f64::INFINITY);
        assert!((r.ssim - 1.0).abs() < 1e-12 && (r.ms_ssim - 1.0).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["psnr_db"], "inf");
        assert_eq!(json["per_image"][0]["nll_bits"], 1.5);
        assert!(r.to_text().contains("psnr_db\tinf"));
    }
}
