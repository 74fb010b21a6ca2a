use crate::image::Image;

/// Separable resampling filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResampleKernel {
    /// Keys cubic convolution; `a = -0.5` is Catmull-Rom.
    Bicubic { a: f64 },
    Nearest,
    /// Area averaging when downscaling.
    Box,
}

impl Default for ResampleKernel {
    fn default() -> Self {
        Self::CATMULL_ROM
    }
}

impl ResampleKernel {
    pub const CATMULL_ROM: Self = Self::Bicubic { a: -0.5 };

    pub fn radius(&self) -> f64 {
        match self {
            Self::Bicubic { .. } => 2.0,
            Self::Nearest | Self::Box => 0.5,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Bicubic { a } => {
                let t = x.abs();
                if t <= 1.0 {
                    ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
                } else if t < 2.0 {
                    ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
                } else {
                    0.0
                }
            }
            Self::Nearest | Self::Box => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Normalized filter taps for every output coordinate along one axis.
/// Out-of-range source indices are clamped to the edge.
pub(crate) fn axis_weights(input: usize, output: usize, kernel: ResampleKernel) -> Vec<Vec<(usize, f64)>> {
    let scale = output as f64 / input as f64;
    if let ResampleKernel::Nearest = kernel {
        return (0..output)
            .map(|o| {
                let src = (((o as f64 + 0.5) / scale).floor() as usize).min(input - 1);
                vec![(src, 1.0)]
            })
            .collect();
    }
    let filter_scale = (1.0 / scale).max(1.0);
    let support = kernel.radius() * filter_scale;
    (0..output)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity((hi - lo) as usize);
            let mut total = 0.0;
            for i in lo..hi {
                let w = kernel.eval((i as f64 + 0.5 - center) / filter_scale);
                if w == 0.0 {
                    continue;
                }
                let idx = i.clamp(0, input as isize - 1) as usize;
                total += w;
                match taps.iter_mut().find(|(j, _)| *j == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Separable resize without clamping; linear in the input, so constant
/// shifts commute with it.
pub fn resize(img: &Image, out_h: usize, out_w: usize, kernel: ResampleKernel) -> Image {
    assert!(out_h > 0 && out_w > 0, "resize to empty image");
    let c = img.channels;
    let wx = axis_weights(img.width, out_w, kernel);
    let wy = axis_weights(img.height, out_h, kernel);
    // horizontal pass: [in_h, out_w, c]
    let mut tmp = vec![0.0; img.height * out_w * c];
    for y in 0..img.height {
        for (ox, taps) in wx.iter().enumerate() {
            let dst = &mut tmp[(y * out_w + ox) * c..(y * out_w + ox + 1) * c];
            for &(ix, w) in taps {
                let src = &img.data[(y * img.width + ix) * c..(y * img.width + ix + 1) * c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    let mut out = vec![0.0; out_h * out_w * c];
    for (oy, taps) in wy.iter().enumerate() {
        for &(iy, w) in taps {
            let src = &tmp[iy * out_w * c..(iy + 1) * out_w * c];
            let dst = &mut out[oy * out_w * c..(oy + 1) * out_w * c];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    Image {
        height: out_h,
        width: out_w,
        channels: c,
        data: out,
    }
}

/// [`resize`] followed by clamping into `[lo, hi]`.
pub fn bicubic_resize(img: &Image, out_h: usize, out_w: usize, kernel: ResampleKernel, range: (f64, f64)) -> Image {
    resize(img, out_h, out_w, kernel).map(|v| v.clamp(range.0, range.1))
}
