//! Real-valued and quantized HWC images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Real-valued image, row-major HWC.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape {
                op: "Image::new",
                lhs: vec![height, width, channels],
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize, c: usize) -> &mut f64 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

/// Image of integer intensity levels in `0..levels`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub levels: usize,
    pub data: Vec<u16>,
}

impl QuantizedImage {
    pub fn new(height: usize, width: usize, channels: usize, levels: usize, data: Vec<u16>) -> Result<Self> {
        if levels < 2 || levels > u16::MAX as usize + 1 {
            return Err(Error::Data(format!("level count K={levels} must be in [2, 65536]")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape {
                op: "QuantizedImage::new",
                lhs: vec![height, width, channels],
                rhs: vec![data.len()],
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| v as usize >= levels) {
            return Err(Error::Data(format!("level {bad} out of range for K={levels}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            levels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, levels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            levels,
            data: vec![0; height * width * channels],
        }
    }

    /// Number of sub-pixels `H * W * C`.
    pub fn sub_pixels(&self) -> usize {
        self.data.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> u16 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.levels == other.levels
    }

    /// Level centers `(l + 0.5) / K` in `[0, 1]`.
    pub fn dequantize(&self) -> Image {
        let k = self.levels as f64;
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&l| (l as f64 + 0.5) / k).collect(),
        }
    }

    /// Network input encoding: level centers rescaled to `[-1, 1]`.
    pub fn to_signed(&self) -> Vec<f64> {
        self.data.iter().map(|&l| signed_level(l, self.levels)).collect()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.data.iter().map(|&l| l as usize).collect()
    }
}

/// `2 (l + 0.5) / K - 1`.
#[inline]
pub fn signed_level(l: u16, levels: usize) -> f64 {
    2.0 * (l as f64 + 0.5) / levels as f64 - 1.0
}

/// Stacks same-layout images into an `[N, H, W, C]` tensor of signed inputs.
pub fn batch_signed(images: &[&QuantizedImage]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::Data("empty batch".into()))?;
    let mut data = Vec::with_capacity(images.len() * first.sub_pixels());
    for im in images {
        if !im.same_layout(first) {
            return Err(Error::Shape {
                op: "batch",
                lhs: vec![first.height, first.width, first.channels],
                rhs: vec![im.height, im.width, im.channels],
            });
        }
        data.extend(im.to_signed());
    }
    Tensor::new(vec![images.len(), first.height, first.width, first.channels], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_levels() {
        assert!(QuantizedImage::new(1, 2, 1, 4, vec![0, 4]).is_err());
        assert!(QuantizedImage::new(1, 2, 1, 1, vec![0, 0]).is_err());
        assert!(QuantizedImage::new(1, 2, 1, 4, vec![0, 3]).is_ok());
    }

    #[test]
    fn signed_encoding_is_symmetric() {
        let q = QuantizedImage::new(1, 4, 1, 4, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(q.to_signed(), vec![-0.75, -0.25, 0.25, 0.75]);
    }
}
