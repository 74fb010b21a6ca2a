//! Masked convolutions, gated PixelCNN blocks and ResNet blocks.

mod layers;
mod mask;
mod params;

pub use layers::{Conv, ConvTranspose, GatedBlock, ResNetBlock};
pub use mask::{build_mask, MaskKind, MaskSpec};
pub use params::{Bound, ParamStore};
