use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Conditioning network plus causal prior, fused by summing logits.
    PixelRecursive,
    /// Conditioning network alone with a per-sub-pixel softmax.
    PixelCe,
    /// Conditioning trunk regressing real values under MSE.
    Regression,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PixelRecursive => "pixel_recursive",
            Self::PixelCe => "pixel_ce",
            Self::Regression => "regression",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel_recursive" => Ok(Self::PixelRecursive),
            "pixel_ce" => Ok(Self::PixelCe),
            "regression" => Ok(Self::Regression),
            _ => Err(Error::Config(format!("unknown model kind {s}"))),
        }
    }
}

/// Architecture and quantization settings of a [`super::ModelBundle`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub channels: usize,
    pub levels: usize,
    pub in_h: usize,
    pub in_w: usize,
    /// Number of stride-2 transposed convolutions; output is
    /// `in << upsample_stages`.
    pub upsample_stages: usize,
    pub cond_width: usize,
    /// ResNet blocks per resolution stage.
    pub cond_blocks: usize,
    pub prior_width: usize,
    pub prior_blocks: usize,
    pub prior_first_kernel: usize,
    pub prior_kernel: usize,
    pub prior_head: usize,
    /// Feed conditioning features into every gated block.
    pub inject: bool,
    /// Regression predicts a residual over the bicubic upsample of `x`.
    pub residual_bicubic: bool,
    /// Average losses over sub-pixels instead of summing.
    pub loss_mean: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::PixelRecursive,
            channels: 3,
            levels: 256,
            in_h: 8,
            in_w: 8,
            upsample_stages: 2,
            cond_width: 16,
            cond_blocks: 2,
            prior_width: 15,
            prior_blocks: 4,
            prior_first_kernel: 7,
            prior_kernel: 5,
            prior_head: 48,
            inject: true,
            residual_bicubic: true,
            loss_mean: true,
        }
    }
}

impl ModelConfig {
    /// The full-size 8x8 -> 32x32 RGB architecture (B = 6 as used for faces).
    pub fn full_scale() -> Self {
        Self {
            cond_width: 32,
            cond_blocks: 6,
            prior_width: 63,
            prior_blocks: 20,
            prior_first_kernel: 7,
            prior_kernel: 5,
            prior_head: 1023,
            ..Self::default()
        }
    }

    pub fn out_h(&self) -> usize {
        self.in_h << self.upsample_stages
    }

    pub fn out_w(&self) -> usize {
        self.in_w << self.upsample_stages
    }

    /// Sub-pixels `M = H * W * C` of one output image.
    pub fn sub_pixels(&self) -> usize {
        self.out_h() * self.out_w() * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.in_h == 0 || self.in_w == 0 {
            return bad("empty input geometry".into());
        }
        if self.levels < 2 {
            return bad(format!("K={} must be at least 2", self.levels));
        }
        if self.cond_width == 0 {
            return bad("cond_width must be positive".into());
        }
        if self.kind == ModelKind::PixelRecursive {
            if self.prior_width % self.channels != 0 || self.prior_head % self.channels != 0 {
                return bad(format!(
                    "prior widths {}/{} must divide into {} channel groups",
                    self.prior_width, self.prior_head, self.channels
                ));
            }
            if self.prior_first_kernel % 2 == 0 || self.prior_kernel % 2 == 0 {
                return bad("masked kernels must be odd".into());
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kind", self.kind.as_str().to_string()),
            ("channels", self.channels.to_string()),
            ("levels", self.levels.to_string()),
            ("in_h", self.in_h.to_string()),
            ("in_w", self.in_w.to_string()),
            ("upsample_stages", self.upsample_stages.to_string()),
            ("cond_width", self.cond_width.to_string()),
            ("cond_blocks", self.cond_blocks.to_string()),
            ("prior_width", self.prior_width.to_string()),
            ("prior_blocks", self.prior_blocks.to_string()),
            ("prior_first_kernel", self.prior_first_kernel.to_string()),
            ("prior_kernel", self.prior_kernel.to_string()),
            ("prior_head", self.prior_head.to_string()),
            ("inject", self.inject.to_string()),
            ("residual_bicubic", self.residual_bicubic.to_string()),
            ("loss_mean", self.loss_mean.to_string()),
        ]
    }

    /// Applies `key=value` overrides; unknown keys are returned untouched so
    /// callers can layer several configs over one map.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<Vec<String>> {
        let mut unknown = Vec::new();
        for (k, v) in kv {
            match k.as_str() {
                "kind" => self.kind = v.parse()?,
                "channels" => self.channels = parse(k, v)?,
                "levels" => self.levels = parse(k, v)?,
                "in_h" => self.in_h = parse(k, v)?,
                "in_w" => self.in_w = parse(k, v)?,
                "upsample_stages" => self.upsample_stages = parse(k, v)?,
                "cond_width" => self.cond_width = parse(k, v)?,
                "cond_blocks" => self.cond_blocks = parse(k, v)?,
                "prior_width" => self.prior_width = parse(k, v)?,
                "prior_blocks" => self.prior_blocks = parse(k, v)?,
                "prior_first_kernel" => self.prior_first_kernel = parse(k, v)?,
                "prior_kernel" => self.prior_kernel = parse(k, v)?,
                "prior_head" => self.prior_head = parse(k, v)?,
                "inject" => self.inject = parse(k, v)?,
                "residual_bicubic" => self.residual_bicubic = parse(k, v)?,
                "loss_mean" => self.loss_mean = parse(k, v)?,
                _ => unknown.push(k.clone()),
            }
        }
        Ok(unknown)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let mut cfg = Self::default();
        let unknown = cfg.apply(&kv)?;
        if let Some(k) = unknown.iter().find(|k| !k.contains('.')) {
            return Err(Error::Config(format!("unknown model key {k}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

/// Line-oriented `key=value` text; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let cfg = ModelConfig {
            kind: ModelKind::PixelCe,
            channels: 1,
            levels: 8,
            inject: false,
            ..Default::default()
        };
        assert_eq!(ModelConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ModelConfig::from_text("levels=1\n").is_err());
        assert!(ModelConfig::from_text("levels=abc\n").is_err());
        assert!(ModelConfig::from_text("bogus=1\n").is_err());
        assert!(ModelConfig::from_text("prior_width=16\n").is_err());
        assert!(ModelConfig::from_text("# comment\n\nprior_width=18\n").is_ok());
    }

    #[test]
    fn full_scale_geometry() {
        let cfg = ModelConfig::full_scale();
        assert_eq!((cfg.out_h(), cfg.out_w()), (32, 32));
        assert_eq!(cfg.sub_pixels(), 32 * 32 * 3);
        cfg.validate().unwrap();
    }
}
