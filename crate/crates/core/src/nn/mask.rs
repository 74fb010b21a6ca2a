use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `A` excludes the current sub-pixel, `B` includes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    A,
    B,
}

/// Raster-then-channel causal mask for a `[kh, kw, cin, cout]` kernel. Input
/// and output features are split into `groups` equal contiguous groups, one
/// per color channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
}

impl MaskSpec {
    pub fn new(kind: MaskKind, kernel: usize, in_channels: usize, out_channels: usize, groups: usize) -> Self {
        Self {
            kind,
            kernel_h: kernel,
            kernel_w: kernel,
            in_channels,
            out_channels,
            groups,
        }
    }
}

pub fn build_mask(spec: &MaskSpec) -> Result<Tensor> {
    let MaskSpec {
        kind,
        kernel_h: kh,
        kernel_w: kw,
        in_channels: cin,
        out_channels: cout,
        groups,
    } = *spec;
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Config(format!("masked kernel must have odd dims, got {kh}x{kw}")));
    }
    if groups == 0 || cin % groups != 0 || cout % groups != 0 {
        return Err(Error::Config(format!(
            "channels {cin}->{cout} not divisible into {groups} groups"
        )));
    }
    let (cy, cx) = (kh / 2, kw / 2);
    let (gin, gout) = (cin / groups, cout / groups);
    let mut m = Tensor::zeros(&[kh, kw, cin, cout]);
    let d = m.data_mut();
    for ky in 0..kh {
        for kx in 0..kw {
            let base = (ky * kw + kx) * cin * cout;
            let cell = &mut d[base..base + cin * cout];
            if ky < cy || (ky == cy && kx < cx) {
                cell.fill(1.0);
            } else if ky == cy && kx == cx {
                for ci in 0..cin {
                    for co in 0..cout {
                        let (ig, og) = (ci / gin, co / gout);
                        let on = match kind {
                            MaskKind::A => ig < og,
                            MaskKind::B => ig <= og,
                        };
                        cell[ci * cout + co] = if on { 1.0 } else { 0.0 };
                    }
                }
            }
        }
    }
    Ok(m)
}
