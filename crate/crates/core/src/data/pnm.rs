//! Binary PGM (P5) and PPM (P6) images with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::QuantizedImage;

/// 8-bit image, HWC with 1 or 3 channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image8 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image8 {
    /// Levels are spread over `0..=255`; exact inverse of [`Image8::to_levels`]
    /// for any `K <= 256`.
    pub fn from_levels(q: &QuantizedImage) -> Self {
        let k1 = (q.levels - 1) as f64;
        Self {
            height: q.height,
            width: q.width,
            channels: q.channels,
            data: q.data.iter().map(|&l| (l as f64 * 255.0 / k1).round() as u8).collect(),
        }
    }

    pub fn to_levels(&self, levels: usize) -> Result<QuantizedImage> {
        let k1 = (levels - 1) as f64;
        QuantizedImage::new(
            self.height,
            self.width,
            self.channels,
            levels,
            self.data.iter().map(|&v| (v as f64 * k1 / 255.0).round() as u16).collect(),
        )
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return self.err(format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| self.err(format!("invalid {what}")), Ok)
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image8> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 {
        return cur.err("missing magic");
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return cur.err("magic must be P5 or P6"),
    };
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return cur.err(format!("unsupported maxval {maxval}"));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return cur.err("expected single whitespace after header");
    }
    cur.pos += 1;
    let expected = width * height * channels;
    let actual = bytes.len() - cur.pos;
    if actual < expected {
        return cur.err(format!("truncated payload: expected {expected} bytes, found {actual}"));
    }
    Ok(Image8 {
        height,
        width,
        channels,
        data: bytes[cur.pos..cur.pos + expected].to_vec(),
    })
}

pub fn encode_pnm(img: &Image8) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Data(format!("PNM supports 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image8> {
    decode_pnm(&fs::read(path)?)
}

pub fn save_image(path: impl AsRef<Path>, img: &Image8) -> Result<()> {
    fs::write(path, encode_pnm(img)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_p5() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.height, img.width, img.channels), (2, 2, 1));
        assert_eq!(img.data, vec![0, 64, 128, 255]);
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(decode_pnm(&bytes).unwrap().data, vec![1, 2, 3]);
    }

    #[test]
    fn truncated_payload_reports_counts() {
        let mut bytes = b"P5 3 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let err = decode_pnm(&bytes).unwrap_err().to_string();
        assert!(err.contains("expected 6") && err.contains("found 4"), "{err}");
        assert!(err.contains("byte 11"), "{err}");
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(decode_pnm(b"P3 1 1 255\n\0"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(decode_pnm(b"P5 x 1 255\n\0"), Err(Error::Parse { offset: 3, .. })));
        assert!(decode_pnm(b"P5 1 1 65535\n\0\0").is_err());
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let img = Image8 {
            height: 3,
            width: 2,
            channels: 3,
            data: (0..18).map(|i| (i * 14) as u8).collect(),
        };
        assert_eq!(decode_pnm(&encode_pnm(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn level_mapping_is_lossless() {
        for k in [2usize, 4, 7, 16, 256] {
            let q = QuantizedImage::new(1, k, 1, k, (0..k as u16).collect()).unwrap();
            assert_eq!(Image8::from_levels(&q).to_levels(k).unwrap(), q);
        }
    }
}
