//! Datasets, image files, resampling and quantization.

pub mod corners;
pub mod glyphs;
pub mod idx;
pub mod pnm;
pub mod quant;
pub mod resample;
pub mod sr;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use corners::{corners_pair, gen_corners_labeled, gen_mnist_corners, Corner, CornersConfig};
pub use glyphs::synthetic_digits;
pub use pnm::{load_image, save_image, Image8};
pub use quant::{dequantize, quantize};
pub use resample::{bicubic_resize, resize, ResampleKernel};
pub use sr::{gen_glyph_sr, GlyphSrConfig};

use crate::error::{Error, Result};
use crate::image::QuantizedImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train = 0,
    Valid = 1,
    Test = 2,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub input: QuantizedImage,
    pub target: QuantizedImage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedDataset {
    pub split: Split,
    pub pairs: Vec<Pair>,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks that every pair shares the first pair's resolutions and `K`.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.pairs.first() else {
            return Err(Error::Data("dataset is empty".into()));
        };
        for (i, p) in self.pairs.iter().enumerate() {
            if !p.input.same_layout(&first.input) || !p.target.same_layout(&first.target) {
                return Err(Error::Data(format!("pair {i} does not match the dataset layout")));
            }
        }
        Ok(())
    }
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Writes `input_NNNNN.pgm` / `target_NNNNN.pgm` files and a manifest with
/// one `input<TAB>target` line per pair. Returns the manifest path.
pub fn save_dataset(dir: impl AsRef<Path>, ds: &PairedDataset) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (i, p) in ds.pairs.iter().enumerate() {
        let (inp, tgt) = (format!("input_{i:05}.pgm"), format!("target_{i:05}.pgm"));
        save_image(dir.join(&inp), &Image8::from_levels(&p.input))?;
        save_image(dir.join(&tgt), &Image8::from_levels(&p.target))?;
        manifest.push_str(&format!("{inp}\t{tgt}\n"));
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest)?;
    Ok(path)
}

/// Parses manifest text into `(input, target)` path pairs relative to `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if !trimmed.is_empty() {
            let (a, b) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
                offset,
                msg: "manifest line needs input<TAB>target".into(),
            })?;
            out.push((base.join(a), base.join(b)));
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn load_dataset(manifest: impl AsRef<Path>, levels: usize, split: Split) -> Result<PairedDataset> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&fs::read_to_string(manifest)?, base)?;
    let pairs = entries
        .iter()
        .map(|(a, b)| {
            Ok(Pair {
                input: load_image(a)?.to_levels(levels)?,
                target: load_image(b)?.to_levels(levels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = PairedDataset { split, pairs };
    ds.validate()?;
    Ok(ds)
}
