use std::str::FromStr;

use super::{Forward, LogitsGrid};
use crate::error::{Error, Result};
use crate::image::QuantizedImage;
use crate::tensor::{log_sum_exp_slice, softmax_slice, Graph, Tensor, Var};

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Cross-entropy of the fused softmax plus cross-entropy of the
    /// conditioning logits alone.
    O2,
    /// Cross-entropy of the fused softmax only.
    O1,
    /// Independent per-sub-pixel softmax on the conditioning logits.
    PixelCe,
    /// Squared error of a real-valued prediction.
    Mse,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::O2 => "o2",
            Self::O1 => "o1",
            Self::PixelCe => "pixel_ce",
            Self::Mse => "mse",
        }
    }

    /// Builds the scalar loss for a batch on `g`.
    pub fn build(&self, g: &mut Graph, f: &Forward, ys: &[&QuantizedImage], mean: bool) -> Result<Var> {
        let missing = |what: &str| Error::Config(format!("objective {} needs {what} output", self.as_str()));
        let targets: Vec<usize> = ys.iter().flat_map(|y| y.targets()).collect();
        let rows = targets.len() as f64;
        let loss = match self {
            Self::O2 | Self::O1 => {
                let a = f.cond.ok_or_else(|| missing("conditioning"))?;
                let b = f.prior.ok_or_else(|| missing("prior"))?;
                let ab = g.add(a, b)?;
                let fused = g.cross_entropy(ab, &targets)?;
                if *self == Self::O2 {
                    let cond = g.cross_entropy(a, &targets)?;
                    g.add(fused, cond)?
                } else {
                    fused
                }
            }
            Self::PixelCe => {
                let a = f.cond.ok_or_else(|| missing("conditioning"))?;
                g.cross_entropy(a, &targets)?
            }
            Self::Mse => {
                let pred = f.regression.ok_or_else(|| missing("regression"))?;
                let data: Vec<f64> = ys.iter().flat_map(|y| y.to_signed()).collect();
                let t = g.constant(Tensor::new(g.shape(pred).to_vec(), data)?);
                g.mse(pred, t)?
            }
        };
        // Sum reduction is per image: total over sub-pixels, averaged over the batch.
        Ok(if mean {
            loss
        } else {
            g.scale(loss, rows / ys.len() as f64)
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "o2" => Ok(Self::O2),
            "o1" => Ok(Self::O1),
            "pixel_ce" => Ok(Self::PixelCe),
            "mse" => Ok(Self::Mse),
            _ => Err(Error::Config(format!("unknown objective {s}"))),
        }
    }
}

/// `softmax(a + b)`.
pub fn fused_distribution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    softmax_slice(&s)
}

fn check(op: &'static str, a: &LogitsGrid, target: &QuantizedImage) -> Result<()> {
    if a.sub_pixels() != target.sub_pixels() || a.levels != target.levels || a.data.len() != a.sub_pixels() * a.levels {
        return Err(Error::Shape {
            op,
            lhs: vec![a.height, a.width, a.channels, a.levels],
            rhs: vec![target.height, target.width, target.channels, target.levels],
        });
    }
    if let Some(&bad) = target.data.iter().find(|&&l| l as usize >= a.levels) {
        return Err(Error::Data(format!("target level {bad} out of range for K={}", a.levels)));
    }
    Ok(())
}

fn reduce(total: f64, n: usize, mean: bool) -> f64 {
    if mean {
        total / n as f64
    } else {
        total
    }
}

fn ce_sum(rows: impl Iterator<Item = (Vec<f64>, usize)>) -> f64 {
    rows.map(|(r, t)| log_sum_exp_slice(&r) - r[t]).sum()
}

/// Cross-entropy of `softmax(A + B)` against `target`.
pub fn loss_o1(a: &LogitsGrid, b: &LogitsGrid, target: &QuantizedImage, mean: bool) -> Result<f64> {
    check("loss_o1", a, target)?;
    check("loss_o1", b, target)?;
    let total = ce_sum(target.data.iter().enumerate().map(|(i, &t)| {
        let row = a.row(i).iter().zip(b.row(i)).map(|(x, y)| x + y).collect();
        (row, t as usize)
    }));
    Ok(reduce(total, target.sub_pixels(), mean))
}

/// [`loss_o1`] plus the cross-entropy of `softmax(A)` alone.
pub fn loss_o2(a: &LogitsGrid, b: &LogitsGrid, target: &QuantizedImage, mean: bool) -> Result<f64> {
    Ok(loss_o1(a, b, target, mean)? + loss_pixel_ce(a, target, mean)?)
}

/// Cross-entropy of an independent per-sub-pixel softmax.
pub fn loss_pixel_ce(a: &LogitsGrid, target: &QuantizedImage, mean: bool) -> Result<f64> {
    check("loss_pixel_ce", a, target)?;
    let total = ce_sum(
        target
            .data
            .iter()
            .enumerate()
            .map(|(i, &t)| (a.row(i).to_vec(), t as usize)),
    );
    Ok(reduce(total, target.sub_pixels(), mean))
}

/// Mean squared error.
pub fn loss_mse(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::Shape {
            op: "loss_mse",
            lhs: vec![prediction.len()],
            rhs: vec![target.len()],
        });
    }
    let s: f64 = prediction.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / prediction.len() as f64)
}
