//! pSNR, SSIM and MS-SSIM on quantized images, computed on level values.

use crate::error::{Error, Result};
use crate::image::QuantizedImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Smallest side length a scale may have.
pub const MS_SSIM_MIN_SIDE: usize = 8;

fn check_pair(op: &'static str, a: &QuantizedImage, b: &QuantizedImage) -> Result<()> {
    if !a.same_layout(b) {
        return Err(Error::Shape {
            op,
            lhs: vec![a.height, a.width, a.channels, a.levels],
            rhs: vec![b.height, b.width, b.channels, b.levels],
        });
    }
    Ok(())
}

/// `10 log10((K-1)^2 / MSE)` over all sub-pixels; identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &QuantizedImage, b: &QuantizedImage) -> Result<f64> {
    check_pair("psnr", a, b)?;
    let se: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    if se == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = se / a.sub_pixels() as f64;
    let peak = (a.levels - 1) as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// One channel as a row-major `h x w` plane.
#[derive(Clone, Debug)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn channel(img: &QuantizedImage, c: usize) -> Self {
        let data = (0..img.height * img.width).map(|p| img.data[p * img.channels + c] as f64).collect();
        Self {
            h: img.height,
            w: img.width,
            data,
        }
    }

    /// 2x2 average pooling, dropping an odd trailing row or column.
    pub fn pool2(&self) -> Self {
        let (h, w) = (self.h / 2, self.w / 2);
        let at = |y: usize, x: usize| self.data[y * self.w + x];
        let data = (0..h * w)
            .map(|i| {
                let (y, x) = (2 * (i / w), 2 * (i % w));
                (at(y, x) + at(y, x + 1) + at(y + 1, x) + at(y + 1, x + 1)) / 4.0
            })
            .collect();
        Self { h, w, data }
    }

    /// Valid separable filtering with `taps` along both axes.
    fn filter(&self, taps: &[f64]) -> Self {
        let n = taps.len();
        let (oh, ow) = (self.h + 1 - n, self.w + 1 - n);
        let mut tmp = vec![0.0; self.h * ow];
        for y in 0..self.h {
            for x in 0..ow {
                tmp[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * self.data[y * self.w + x + k]).sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * tmp[(y + k) * ow + x]).sum();
            }
        }
        Self {
            h: oh,
            w: ow,
            data: out,
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            h: self.h,
            w: self.w,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Mean SSIM and mean contrast-structure term of one plane pair.
pub fn ssim_plane(a: &Plane, b: &Plane, window: usize, peak: f64) -> Result<(f64, f64)> {
    if a.h < window || a.w < window {
        return Err(Error::Metric(format!(
            "{}x{} image is smaller than the {window}x{window} SSIM window",
            a.h, a.w
        )));
    }
    let taps = gaussian_taps(window, SSIM_SIGMA);
    let (c1, c2) = ((SSIM_K1 * peak).powi(2), (SSIM_K2 * peak).powi(2));
    let mu_a = a.filter(&taps);
    let mu_b = b.filter(&taps);
    let aa = a.zip(a, |x, y| x * y).filter(&taps);
    let bb = b.zip(b, |x, y| x * y).filter(&taps);
    let ab = a.zip(b, |x, y| x * y).filter(&taps);
    let n = mu_a.data.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.data.len() {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let va = aa.data[i] - ma * ma;
        let vb = bb.data[i] - mb * mb;
        let cov = ab.data[i] - ma * mb;
        let contrast = (2.0 * cov + c2) / (va + vb + c2);
        cs += contrast;
        ssim += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * contrast;
    }
    Ok((ssim / n, cs / n))
}

/// Gaussian-window SSIM (11x11, sigma 1.5, k1 0.01, k2 0.03, L = K-1),
/// averaged over valid window positions and then over channels.
pub fn ssim(a: &QuantizedImage, b: &QuantizedImage) -> Result<f64> {
    ssim_window(a, b, SSIM_WINDOW)
}

pub fn ssim_window(a: &QuantizedImage, b: &QuantizedImage, window: usize) -> Result<f64> {
    check_pair("ssim", a, b)?;
    let peak = (a.levels - 1) as f64;
    let mut total = 0.0;
    for c in 0..a.channels {
        total += ssim_plane(&Plane::channel(a, c), &Plane::channel(b, c), window, peak)?.0;
    }
    Ok(total / a.channels as f64)
}

/// Number of scales for an image: sides halve per scale and must stay at
/// least [`MS_SSIM_MIN_SIDE`]; at most five.
pub fn ms_ssim_scales(h: usize, w: usize) -> usize {
    let side = h.min(w);
    (0..MS_SSIM_WEIGHTS.len()).take_while(|&s| side >> s >= MS_SSIM_MIN_SIDE).count()
}

/// Window used at a scale whose smaller side is `side`: 11, or the largest
/// odd size that fits.
pub fn ms_ssim_window(side: usize) -> usize {
    let w = SSIM_WINDOW.min(side);
    if w % 2 == 0 {
        w - 1
    } else {
        w
    }
}

/// Multi-scale SSIM with the standard weights truncated to the available
/// scales and renormalised. Contrast-structure terms come from every scale
/// but the last, which contributes its full SSIM; terms are clamped at zero
/// before exponentiation. With one scale the result is plain SSIM.
pub fn ms_ssim(a: &QuantizedImage, b: &QuantizedImage) -> Result<f64> {
    check_pair("ms_ssim", a, b)?;
    let scales = ms_ssim_scales(a.height, a.width);
    ms_ssim_scales_n(a, b, scales)
}

pub fn ms_ssim_scales_n(a: &QuantizedImage, b: &QuantizedImage, scales: usize) -> Result<f64> {
    check_pair("ms_ssim", a, b)?;
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() || (a.height.min(a.width) >> (scales - 1)) < 1 {
        return Err(Error::Metric(format!(
            "{}x{} image cannot support {scales} MS-SSIM scales",
            a.height, a.width
        )));
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let peak = (a.levels - 1) as f64;
    let mut total = 0.0;
    for c in 0..a.channels {
        let (mut pa, mut pb) = (Plane::channel(a, c), Plane::channel(b, c));
        let mut value = 1.0;
        for s in 0..scales {
            let window = ms_ssim_window(pa.h.min(pa.w));
            let (full, cs) = ssim_plane(&pa, &pb, window, peak)?;
            if scales == 1 {
                value = full;
                break;
            }
            let term = if s + 1 == scales { full } else { cs };
            value *= term.max(0.0).powf(MS_SSIM_WEIGHTS[s] / wsum);
            pa = pa.pool2();
            pb = pb.pool2();
        }
        total += value;
    }
    Ok(total / a.channels as f64)
}
