//! MNIST IDX files (big-endian, unsigned byte payload).

use crate::error::{Error, Result};
use crate::image::Image;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            msg: "unexpected end of IDX header".into(),
        })
}

/// Decodes an image file into `[0, 1]` grayscale images.
pub fn read_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad IDX image magic {magic:#010x}"),
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(Error::Parse {
            offset: bytes.len(),
            msg: format!("truncated IDX payload: expected {need} bytes, found {}", bytes.len()),
        });
    }
    Ok(bytes[16..need]
        .chunks(rows * cols)
        .map(|px| Image {
            height: rows,
            width: cols,
            channels: 1,
            data: px.iter().map(|&b| b as f64 / 255.0).collect(),
        })
        .collect())
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad IDX label magic {magic:#010x}"),
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    bytes.get(8..8 + n).map(<[u8]>::to_vec).ok_or_else(|| Error::Parse {
        offset: bytes.len(),
        msg: format!("truncated IDX labels: expected {} bytes, found {}", 8 + n, bytes.len()),
    })
}
