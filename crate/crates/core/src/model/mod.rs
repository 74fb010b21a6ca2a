//! Conditioning and prior networks, the fused per-sub-pixel softmax, and
//! the training objectives.

mod checkpoint;
mod config;
mod loss;
mod networks;

pub use checkpoint::{load_bundle, read_checkpoint, save_bundle, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::{parse_kv, ModelConfig, ModelKind};
pub use loss::{fused_distribution, loss_mse, loss_o1, loss_o2, loss_pixel_ce, Objective};
pub use networks::{ConditioningNet, ConditioningOutput, Networks, PriorNet};

use std::f64::consts::LN_2;

use crate::data::resample::{resize, ResampleKernel};
use crate::error::{Error, Result};
use crate::image::{batch_signed, Image, QuantizedImage};
use crate::nn::{Bound, ParamStore};
use crate::tensor::{log_sum_exp_slice, Graph, Tensor, Var};

/// One K-vector of logits per sub-pixel, rows in raster-then-channel order.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub levels: usize,
    pub data: Vec<f64>,
}

impl LogitsGrid {
    pub fn zeros(height: usize, width: usize, channels: usize, levels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            levels,
            data: vec![0.0; height * width * channels * levels],
        }
    }

    pub fn from_tensor(t: &Tensor, channels: usize, levels: usize) -> Result<Self> {
        let [n, h, w, ck] = t.dims4()?;
        if n != 1 || ck != channels * levels {
            return Err(Error::Shape {
                op: "LogitsGrid::from_tensor",
                lhs: t.shape().to_vec(),
                rhs: vec![1, h, w, channels * levels],
            });
        }
        Ok(Self {
            height: h,
            width: w,
            channels,
            levels,
            data: t.data().to_vec(),
        })
    }

    pub fn sub_pixels(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.levels..(i + 1) * self.levels]
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        (self.height, self.width, self.channels, self.levels)
            == (other.height, other.width, other.channels, other.levels)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Parameters plus the architecture they instantiate.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub nets: Networks,
}

impl PartialEq for ModelBundle {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Graph handles produced by one batched forward pass.
pub struct Forward {
    /// Conditioning logits `[N*H*W*C, K]` (absent for regression).
    pub cond: Option<Var>,
    /// Prior logits `[N*H*W*C, K]`.
    pub prior: Option<Var>,
    /// Regression prediction `[N, H, W, C]` in signed units.
    pub regression: Option<Var>,
}

impl ModelBundle {
    /// Registers every parameter with value zero.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let nets = Networks::register(&mut params, &config)?;
        Ok(Self { config, params, nets })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn check_input(&self, x: &QuantizedImage) -> Result<()> {
        let c = &self.config;
        if (x.height, x.width, x.channels, x.levels) != (c.in_h, c.in_w, c.channels, c.levels) {
            return Err(Error::Config(format!(
                "input {}x{}x{} (K={}) does not match configured {}x{}x{} (K={})",
                x.height, x.width, x.channels, x.levels, c.in_h, c.in_w, c.channels, c.levels
            )));
        }
        Ok(())
    }

    pub fn check_output(&self, y: &QuantizedImage) -> Result<()> {
        let c = &self.config;
        if (y.height, y.width, y.channels, y.levels) != (c.out_h(), c.out_w(), c.channels, c.levels) {
            return Err(Error::Config(format!(
                "output {}x{}x{} (K={}) does not match configured {}x{}x{} (K={})",
                y.height,
                y.width,
                y.channels,
                y.levels,
                c.out_h(),
                c.out_w(),
                c.channels,
                c.levels
            )));
        }
        Ok(())
    }

    /// Bicubic upsample of the signed input, used as the regression base.
    pub fn bicubic_base(&self, x: &QuantizedImage) -> Image {
        let signed = Image {
            height: x.height,
            width: x.width,
            channels: x.channels,
            data: x.to_signed(),
        };
        resize(&signed, self.config.out_h(), self.config.out_w(), ResampleKernel::CATMULL_ROM)
    }

    /// Batched forward. `ys` (teacher-forcing context) is required for the
    /// pixel-recursive prior.
    pub fn forward(&self, g: &mut Graph, p: &Bound, xs: &[&QuantizedImage], ys: Option<&[&QuantizedImage]>) -> Result<Forward> {
        for x in xs {
            self.check_input(x)?;
        }
        let k = self.config.levels;
        let xin = g.constant(batch_signed(xs)?);
        let cond = self.nets.cond.forward(g, p, xin)?;
        match self.config.kind {
            ModelKind::Regression => {
                let mut pred = g.tanh(cond.head);
                if self.config.residual_bicubic {
                    let mut base = Vec::new();
                    for x in xs {
                        base.extend(self.bicubic_base(x).data);
                    }
                    let shape = g.shape(pred).to_vec();
                    let b = g.constant(Tensor::new(shape, base)?);
                    pred = g.add(pred, b)?;
                }
                Ok(Forward {
                    cond: None,
                    prior: None,
                    regression: Some(pred),
                })
            }
            ModelKind::PixelCe => {
                let rows = g.value(cond.head).len() / k;
                let a = g.reshape(cond.head, &[rows, k])?;
                Ok(Forward {
                    cond: Some(a),
                    prior: None,
                    regression: None,
                })
            }
            ModelKind::PixelRecursive => {
                let ys = ys.ok_or_else(|| Error::Config("prior needs target context".into()))?;
                for y in ys {
                    self.check_output(y)?;
                }
                let rows = g.value(cond.head).len() / k;
                let a = g.reshape(cond.head, &[rows, k])?;
                let yin = g.constant(batch_signed(ys)?);
                let prior = self.nets.prior.as_ref().expect("pixel-recursive bundle has a prior");
                let feats = self.config.inject.then_some(cond.features);
                let b = prior.forward(g, p, yin, feats)?;
                let b = g.reshape(b, &[rows, k])?;
                Ok(Forward {
                    cond: Some(a),
                    prior: Some(b),
                    regression: None,
                })
            }
        }
    }

    /// Conditioning logits and features for a single input.
    pub fn conditioning(&self, x: &QuantizedImage) -> Result<(LogitsGrid, Tensor)> {
        if self.config.kind == ModelKind::Regression {
            return Err(Error::Config("regression models have no logits".into()));
        }
        self.check_input(x)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let xin = g.constant(batch_signed(&[x])?);
        let out = self.nets.cond.forward(&mut g, &p, xin)?;
        let a = LogitsGrid::from_tensor(g.value(out.head), self.config.channels, self.config.levels)?;
        Ok((a, g.value(out.features).clone()))
    }

    /// Prior logits for one target given conditioning features (the output
    /// of [`ModelBundle::conditioning`]).
    pub fn prior_with_features(&self, features: &Tensor, y: &QuantizedImage) -> Result<LogitsGrid> {
        let prior = self
            .nets
            .prior
            .as_ref()
            .ok_or_else(|| Error::Config("model has no prior network".into()))?;
        self.check_output(y)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let yin = g.constant(batch_signed(&[y])?);
        let feats = self.config.inject.then(|| g.constant(features.clone()));
        let b = prior.forward(&mut g, &p, yin, feats)?;
        LogitsGrid::from_tensor(g.value(b), self.config.channels, self.config.levels)
    }

    /// Real-valued prediction of a regression model in `[0, 1]`.
    pub fn predict_regression(&self, x: &QuantizedImage) -> Result<Image> {
        if self.config.kind != ModelKind::Regression {
            return Err(Error::Config("not a regression model".into()));
        }
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let f = self.forward(&mut g, &p, &[x], None)?;
        let t = g.value(f.regression.expect("regression output"));
        let [_, h, w, c] = t.dims4()?;
        Image::new(h, w, c, t.data().iter().map(|v| ((v.clamp(-1.0, 1.0)) + 1.0) / 2.0).collect())
    }
}

/// `A(x)`: conditioning logits.
pub fn condition_logits(bundle: &ModelBundle, x: &QuantizedImage) -> Result<LogitsGrid> {
    bundle.conditioning(x).map(|(a, _)| a)
}

/// `B(y_<i)`: prior logits under teacher forcing. With conditioning
/// injection enabled the prior also reads the features of `x`.
pub fn prior_logits(bundle: &ModelBundle, x: &QuantizedImage, y: &QuantizedImage) -> Result<LogitsGrid> {
    let (_, feats) = bundle.conditioning(x)?;
    bundle.prior_with_features(&feats, y)
}

/// Teacher-forced `-log2 p(y | x)` divided by the number of sub-pixels.
pub fn nll_report(bundle: &ModelBundle, x: &QuantizedImage, y: &QuantizedImage) -> Result<f64> {
    bundle.check_output(y)?;
    let (a, feats) = bundle.conditioning(x)?;
    let b = match bundle.config.kind {
        ModelKind::PixelRecursive => Some(bundle.prior_with_features(&feats, y)?),
        ModelKind::PixelCe => None,
        ModelKind::Regression => return Err(Error::Config("regression models have no likelihood".into())),
    };
    let mut row = vec![0.0; a.levels];
    let mut total = 0.0;
    for (i, &t) in y.data.iter().enumerate() {
        row.copy_from_slice(a.row(i));
        if let Some(b) = &b {
            row.iter_mut().zip(b.row(i)).for_each(|(r, v)| *r += v);
        }
        total += bits(&row, t as usize);
    }
    Ok(total / y.sub_pixels() as f64)
}

/// `-log2 softmax(row)[t]`, computed in base 2 so that a flat row gives
/// exactly `log2 K`.
fn bits(row: &[f64], t: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
    s.log2() + (m - row[t]) / LN_2
}

/// Per-row `log softmax(row)[target]`, for diagnostics.
pub fn log_prob_rows(logits: &LogitsGrid, target: &QuantizedImage) -> Vec<f64> {
    target
        .data
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let row = logits.row(i);
            row[t as usize] - log_sum_exp_slice(row)
        })
        .collect()
}
