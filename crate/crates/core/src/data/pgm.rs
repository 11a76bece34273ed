//! Binary (P5) PGM with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Mask};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Pgm {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
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
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pgm {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

pub fn decode(bytes: &[u8]) -> Result<Gray8> {
    let mut c = Cursor { bytes, pos: 0 };
    match bytes.get(..2) {
        Some(b"P5") => c.pos = 2,
        Some(b"P2") => return Err(c.err("ASCII (P2) PGM is not supported; expected P5")),
        _ => return Err(c.err("missing P5 magic")),
    }
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval = c.number("maxval")?;
    if maxval != 255 {
        return Err(c.err(format!("maxval {maxval} unsupported; expected 255")));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return Err(c.err("expected single whitespace before pixel data")),
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| c.err("image dimensions overflow"))?;
    let have = bytes.len() - c.pos;
    if have < need {
        return Err(c.err(format!("payload truncated: {need} bytes expected, {have} present")));
    }
    if have > need {
        return Err(Error::Pgm {
            offset: c.pos + need,
            reason: format!("{} unexpected trailing bytes", have - need),
        });
    }
    Ok(Gray8 {
        width,
        height,
        pixels: bytes[c.pos..].to_vec(),
    })
}

/// `[0, 1]` reals to bytes, rounding to nearest.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_image(img: &FeatureMap<f32>) -> Vec<u8> {
    let s = img.shape();
    let px: Vec<u8> = img.plane(0, 0).iter().map(|&v| quantize(v)).collect();
    encode(s.w, s.h, &px)
}

pub fn decode_image(bytes: &[u8]) -> Result<FeatureMap<f32>> {
    let g = decode(bytes)?;
    FeatureMap::from_plane(g.height, g.width, g.pixels.iter().map(|&b| b as f32 / 255.0).collect())
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let px: Vec<u8> = mask.bits().iter().map(|&b| if b != 0 { 255 } else { 0 }).collect();
    encode(mask.width(), mask.height(), &px)
}

/// Bytes above 127 are set.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let g = decode(bytes)?;
    Mask::from_bits(g.height, g.width, g.pixels.iter().map(|&b| (b > 127) as u8).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_image(path: &Path) -> Result<FeatureMap<f32>> {
    decode_image(&read(path)?)
}

pub fn save_image(path: &Path, img: &FeatureMap<f32>) -> Result<()> {
    write(path, &encode_image(img))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    decode_mask(&read(path)?)
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    write(path, &encode_mask(mask))
}
