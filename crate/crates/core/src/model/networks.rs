use super::config::{ModelConfig, ModelKind};
use crate::error::Result;
use crate::nn::{Bound, Conv, ConvTranspose, GatedBlock, MaskKind, ParamStore, ResNetBlock};
use crate::tensor::{Graph, Var};

/// Feed-forward trunk: input conv, ResNet blocks at every resolution with a
/// stride-2 transposed convolution between stages, and a 1x1 head.
#[derive(Clone, Debug)]
pub struct ConditioningNet {
    pub input: Conv,
    pub stages: Vec<Vec<ResNetBlock>>,
    pub upsample: Vec<ConvTranspose>,
    pub head: Conv,
}

pub struct ConditioningOutput {
    /// `relu` of the final residual stream, `[N, H, W, cond_width]`.
    pub features: Var,
    /// Head output, `[N, H, W, head_channels]`.
    pub head: Var,
}

impl ConditioningNet {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, prefix: &str, head_channels: usize) -> Result<Self> {
        let w = cfg.cond_width;
        let input = Conv::register(store, &format!("{prefix}.input"), 3, cfg.channels, w, true, None)?;
        let mut stages = Vec::new();
        let mut upsample = Vec::new();
        for s in 0..=cfg.upsample_stages {
            if s > 0 {
                upsample.push(ConvTranspose::register(store, &format!("{prefix}.up{s}"), 3, w, w, 2)?);
            }
            let blocks = (0..cfg.cond_blocks)
                .map(|b| ResNetBlock::register(store, &format!("{prefix}.stage{s}.res{b}"), w, 3))
                .collect::<Result<Vec<_>>>()?;
            stages.push(blocks);
        }
        let head = Conv::register(store, &format!("{prefix}.head"), 1, w, head_channels, true, None)?;
        Ok(Self {
            input,
            stages,
            upsample,
            head,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<ConditioningOutput> {
        let mut h = self.input.forward(g, p, x)?;
        for (s, blocks) in self.stages.iter().enumerate() {
            if s > 0 {
                h = self.upsample[s - 1].forward(g, p, h)?;
            }
            for b in blocks {
                h = b.forward(g, p, h)?;
            }
        }
        let features = g.relu(h);
        let head = self.head.forward(g, p, features)?;
        Ok(ConditioningOutput { features, head })
    }
}

/// Causal prior: kind-A first layer, gated kind-B blocks, two masked 1x1
/// output layers producing `C * K` logits per pixel (grouped by channel).
#[derive(Clone, Debug)]
pub struct PriorNet {
    pub first: Conv,
    pub blocks: Vec<GatedBlock>,
    pub head1: Conv,
    pub head2: Conv,
}

impl PriorNet {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, prefix: &str) -> Result<Self> {
        let groups = cfg.channels;
        let w = cfg.prior_width;
        let first = Conv::register(
            store,
            &format!("{prefix}.first"),
            cfg.prior_first_kernel,
            cfg.channels,
            w,
            true,
            Some((MaskKind::A, groups)),
        )?;
        let cond = cfg.inject.then_some(cfg.cond_width);
        let blocks = (0..cfg.prior_blocks)
            .map(|b| GatedBlock::register(store, &format!("{prefix}.gated{b}"), w, cfg.prior_kernel, groups, cond))
            .collect::<Result<Vec<_>>>()?;
        let masked = Some((MaskKind::B, groups));
        let head1 = Conv::register(store, &format!("{prefix}.head1"), 1, w, cfg.prior_head, true, masked)?;
        let head2 = Conv::register(
            store,
            &format!("{prefix}.head2"),
            1,
            cfg.prior_head,
            cfg.channels * cfg.levels,
            true,
            masked,
        )?;
        Ok(Self {
            first,
            blocks,
            head1,
            head2,
        })
    }

    /// `y`: signed `[N, H, W, C]` targets; `cond`: conditioning features.
    pub fn forward(&self, g: &mut Graph, p: &Bound, y: Var, cond: Option<Var>) -> Result<Var> {
        let mut h = self.first.forward(g, p, y)?;
        for b in &self.blocks {
            h = b.forward(g, p, h, cond)?;
        }
        let o = g.relu(h);
        let o = self.head1.forward(g, p, o)?;
        let o = g.relu(o);
        self.head2.forward(g, p, o)
    }
}

#[derive(Clone, Debug)]
pub struct Networks {
    pub cond: ConditioningNet,
    pub prior: Option<PriorNet>,
}

impl Networks {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let head = match cfg.kind {
            ModelKind::Regression => cfg.channels,
            _ => cfg.channels * cfg.levels,
        };
        let cond = ConditioningNet::register(store, cfg, "cond", head)?;
        let prior = match cfg.kind {
            ModelKind::PixelRecursive => Some(PriorNet::register(store, cfg, "prior")?),
            _ => None,
        };
        Ok(Self { cond, prior })
    }
}
