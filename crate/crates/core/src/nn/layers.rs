use std::sync::Arc;

use super::mask::{build_mask, MaskKind, MaskSpec};
use super::params::{Bound, ParamStore};
use crate::error::Result;
use crate::tensor::{Graph, Padding, Tensor, Var};

/// Square stride-1 SAME convolution with an optional causal mask and bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: String,
    pub bias: Option<String>,
    pub mask: Option<Arc<Tensor>>,
    pub kernel: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Conv {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        kernel: usize,
        cin: usize,
        cout: usize,
        bias: bool,
        mask: Option<(MaskKind, usize)>,
    ) -> Result<Self> {
        let weight = format!("{name}.w");
        store.register(&weight, &[kernel, kernel, cin, cout])?;
        let mask = match mask {
            Some((kind, groups)) => {
                let m = Arc::new(build_mask(&MaskSpec::new(kind, kernel, cin, cout, groups))?);
                store.attach_mask(&weight, m.clone());
                Some(m)
            }
            None => None,
        };
        let bias = if bias {
            let b = format!("{name}.b");
            store.register(&b, &[cout])?;
            Some(b)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            mask,
            kernel,
            cin,
            cout,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let w = p.var(&self.weight)?;
        let y = g.conv2d(x, w, 1, Padding::Same, self.mask.clone())?;
        match &self.bias {
            Some(b) => g.add_bias(y, p.var(b)?),
            None => Ok(y),
        }
    }
}

/// Transposed convolution, kernel stored as `[k, k, cout, cin]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose {
    pub weight: String,
    pub bias: String,
    pub stride: usize,
}

impl ConvTranspose {
    pub fn register(store: &mut ParamStore, name: &str, kernel: usize, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        let weight = format!("{name}.w");
        let bias = format!("{name}.b");
        store.register(&weight, &[kernel, kernel, cout, cin])?;
        store.register(&bias, &[cout])?;
        Ok(Self { weight, bias, stride })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.transposed_conv2d(x, p.var(&self.weight)?, self.stride)?;
        g.add_bias(y, p.var(&self.bias)?)
    }
}

/// Gated residual unit
/// `x + proj(tanh(conv_t(x) + inj_t(c)) * sigmoid(conv_s(x) + inj_s(c)))`.
/// All convolutions on `x` carry kind-B masks; the conditioning injections
/// are unmasked 1x1 convolutions.
#[derive(Clone, Debug)]
pub struct GatedBlock {
    pub conv_t: Conv,
    pub conv_s: Conv,
    pub inj_t: Option<Conv>,
    pub inj_s: Option<Conv>,
    pub proj: Conv,
}

impl GatedBlock {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        kernel: usize,
        groups: usize,
        cond_width: Option<usize>,
    ) -> Result<Self> {
        let masked = Some((MaskKind::B, groups));
        let conv_t = Conv::register(store, &format!("{name}.tanh"), kernel, width, width, true, masked)?;
        let conv_s = Conv::register(store, &format!("{name}.gate"), kernel, width, width, true, masked)?;
        let (inj_t, inj_s) = match cond_width {
            Some(cw) => (
                Some(Conv::register(store, &format!("{name}.inj_tanh"), 1, cw, width, false, None)?),
                Some(Conv::register(store, &format!("{name}.inj_gate"), 1, cw, width, false, None)?),
            ),
            None => (None, None),
        };
        let proj = Conv::register(store, &format!("{name}.proj"), 1, width, width, true, masked)?;
        Ok(Self {
            conv_t,
            conv_s,
            inj_t,
            inj_s,
            proj,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, cond: Option<Var>) -> Result<Var> {
        let mut t = self.conv_t.forward(g, p, x)?;
        let mut s = self.conv_s.forward(g, p, x)?;
        if let (Some(c), Some(it), Some(is)) = (cond, &self.inj_t, &self.inj_s) {
            let ct = it.forward(g, p, c)?;
            t = g.add(t, ct)?;
            let cs = is.forward(g, p, c)?;
            s = g.add(s, cs)?;
        }
        let t = g.tanh(t);
        let s = g.sigmoid(s);
        let z = g.mul(t, s)?;
        let out = self.proj.forward(g, p, z)?;
        g.add(x, out)
    }
}

/// Pre-activation residual block `x + conv2(relu(conv1(relu(x))))`.
#[derive(Clone, Debug)]
pub struct ResNetBlock {
    pub conv1: Conv,
    pub conv2: Conv,
}

impl ResNetBlock {
    pub fn register(store: &mut ParamStore, name: &str, width: usize, kernel: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv::register(store, &format!("{name}.conv1"), kernel, width, width, true, None)?,
            conv2: Conv::register(store, &format!("{name}.conv2"), kernel, width, width, true, None)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = g.relu(x);
        let h = self.conv1.forward(g, p, h)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, p, h)?;
        g.add(x, h)
    }
}
