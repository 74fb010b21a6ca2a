//! Position-at-a-time evaluation of the prior network.
//!
//! Every layer is evaluated at one pixel with the same tap list, kernel
//! matrix and GEMM as the whole-image convolution, so the logits agree with
//! a full forward pass bit for bit.

use crate::error::{Error, Result};
use crate::image::{signed_level, QuantizedImage};
use crate::model::{ModelBundle, PriorNet};
use crate::nn::{Conv, ParamStore};
use crate::tensor::conv::{active_taps, conv_at, kernel_matrix};
use crate::tensor::{relu, sigmoid, ConvGeom, Padding, Tensor};

struct PosConv {
    geom: ConvGeom,
    taps: Vec<(usize, usize)>,
    wmat: Vec<f64>,
    bias: Option<Vec<f64>>,
    row: Vec<f64>,
}

impl PosConv {
    /// `h x w` is the spatial size of the map the convolution reads.
    fn new(conv: &Conv, params: &ParamStore, h: usize, w: usize) -> Result<Self> {
        let kernel = params.get(&conv.weight)?;
        let geom = ConvGeom::new(&[1, h, w, conv.cin], kernel.shape(), 1, Padding::Same)?;
        let mask = conv.mask.as_deref();
        let taps = active_taps(geom.kh, geom.kw, mask);
        let wmat = kernel_matrix(kernel, mask, &taps);
        let bias = match &conv.bias {
            Some(b) => Some(params.get(b)?.data().to_vec()),
            None => None,
        };
        let row = vec![0.0; taps.len() * conv.cin];
        Ok(Self {
            geom,
            taps,
            wmat,
            bias,
            row,
        })
    }

    fn at(&mut self, input: &[f64], oy: usize, ox: usize, out: &mut [f64]) {
        conv_at(input, &self.geom, &self.taps, &self.wmat, 0, oy, ox, &mut self.row, out);
        if let Some(b) = &self.bias {
            for (v, bb) in out.iter_mut().zip(b) {
                *v += bb;
            }
        }
    }
}

struct PosBlock {
    conv_t: PosConv,
    conv_s: PosConv,
    inj: Option<(PosConv, PosConv)>,
    proj: PosConv,
}

/// Prior network state for one image being decoded.
pub struct IncrementalPrior {
    height: usize,
    width: usize,
    channels: usize,
    levels: usize,
    pw: usize,
    first: PosConv,
    blocks: Vec<PosBlock>,
    head1: PosConv,
    head2: PosConv,
    cond: Option<Vec<f64>>,
    /// Signed image being generated, unsampled entries at level 0.
    y: Vec<f64>,
    /// Residual stream after the first layer and after every block.
    hs: Vec<Vec<f64>>,
    scratch: [Vec<f64>; 5],
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl IncrementalPrior {
    pub fn new(bundle: &ModelBundle, features: &Tensor) -> Result<Self> {
        let prior: &PriorNet = bundle
            .nets
            .prior
            .as_ref()
            .ok_or_else(|| Error::Config("model has no prior network".into()))?;
        let cfg = &bundle.config;
        let p = &bundle.params;
        let (h, w) = (cfg.out_h(), cfg.out_w());
        let pw = cfg.prior_width;
        let blocks = prior
            .blocks
            .iter()
            .map(|b| {
                let inj = match (&b.inj_t, &b.inj_s, cfg.inject) {
                    (Some(t), Some(s), true) => Some((PosConv::new(t, p, h, w)?, PosConv::new(s, p, h, w)?)),
                    _ => None,
                };
                Ok(PosBlock {
                    conv_t: PosConv::new(&b.conv_t, p, h, w)?,
                    conv_s: PosConv::new(&b.conv_s, p, h, w)?,
                    inj,
                    proj: PosConv::new(&b.proj, p, 1, 1)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cond = if cfg.inject {
            if features.shape() != [1, h, w, cfg.cond_width] {
                return Err(Error::Shape {
                    op: "IncrementalPrior::new",
                    lhs: features.shape().to_vec(),
                    rhs: vec![1, h, w, cfg.cond_width],
                });
            }
            Some(features.data().to_vec())
        } else {
            None
        };
        let y = QuantizedImage::zeros(h, w, cfg.channels, cfg.levels).to_signed();
        Ok(Self {
            height: h,
            width: w,
            channels: cfg.channels,
            levels: cfg.levels,
            pw,
            first: PosConv::new(&prior.first, p, h, w)?,
            head1: PosConv::new(&prior.head1, p, 1, 1)?,
            head2: PosConv::new(&prior.head2, p, 1, 1)?,
            hs: vec![vec![0.0; h * w * pw]; blocks.len() + 1],
            blocks,
            cond,
            y,
            scratch: std::array::from_fn(|_| vec![0.0; pw]),
            hidden: vec![0.0; cfg.prior_head],
            logits: vec![0.0; cfg.channels * cfg.levels],
        })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.height, self.width, self.channels, self.levels)
    }

    /// Records a decoded level.
    pub fn set(&mut self, sub_pixel: usize, level: u16) {
        self.y[sub_pixel] = signed_level(level, self.levels);
    }

    /// Evaluates every layer at `(oy, ox)` and returns the `C * K` logits of
    /// that pixel. Earlier pixels must already be final.
    pub fn compute(&mut self, oy: usize, ox: usize) -> &[f64] {
        let pw = self.pw;
        let pos = oy * self.width + ox;
        let span = pos * pw..(pos + 1) * pw;
        self.first.at(&self.y, oy, ox, &mut self.hs[0][span.clone()]);
        let [t, s, ct, cs, z] = &mut self.scratch;
        for (b, blk) in self.blocks.iter_mut().enumerate() {
            let (done, rest) = self.hs.split_at_mut(b + 1);
            let x = &done[b];
            blk.conv_t.at(x, oy, ox, t);
            blk.conv_s.at(x, oy, ox, s);
            if let (Some((it, is)), Some(c)) = (&mut blk.inj, &self.cond) {
                it.at(c, oy, ox, ct);
                is.at(c, oy, ox, cs);
                t.iter_mut().zip(ct.iter()).for_each(|(a, b)| *a += b);
                s.iter_mut().zip(cs.iter()).for_each(|(a, b)| *a += b);
            }
            for i in 0..pw {
                z[i] = t[i].tanh() * sigmoid(s[i]);
            }
            blk.proj.at(z, 0, 0, t);
            let out = &mut rest[0][span.clone()];
            for i in 0..pw {
                out[i] = x[span.start + i] + t[i];
            }
        }
        let last = self.hs.last().expect("at least one map");
        for i in 0..pw {
            z[i] = relu(last[span.start + i]);
        }
        self.head1.at(z, 0, 0, &mut self.hidden);
        self.hidden.iter_mut().for_each(|v| *v = relu(*v));
        self.head2.at(&self.hidden, 0, 0, &mut self.logits);
        &self.logits
    }
}
