//! Binary PGM (`P5`, maxval 255).
//!
//! A byte `v` loads as `v / 255`. Saving clamps to `[0, 1]`, scales by 255
//! and rounds half away from zero.

use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    /// Skips whitespace and `#` comments running to end of line.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next decimal field and the offset where it starts.
    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                self.err(format!("header ends before {what}"))
            } else {
                self.err(format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map(|v| (v, start))
            .map_err(|_| Error::Parse {
                offset: start,
                message: format!("{what} is out of range"),
            })
    }
}

/// Decodes a binary PGM image.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    match bytes.get(..2) {
        Some(b"P5") => {}
        Some([b'P', b'1'..=b'7']) => {
            return Err(cur.err(format!(
                "unsupported netpbm variant {}; only binary P5 is supported",
                String::from_utf8_lossy(&bytes[..2])
            )))
        }
        _ => return Err(cur.err("missing P5 magic number")),
    }
    cur.pos = 2;
    if !cur.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(cur.err("expected whitespace after magic number"));
    }
    let (width, _) = cur.number("width")?;
    let (height, _) = cur.number("height")?;
    let (maxval, maxval_at) = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse {
            offset: maxval_at,
            message: format!("zero image dimension {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(Error::Parse {
            offset: maxval_at,
            message: format!("unsupported maxval {maxval}; only 255 is supported"),
        });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected a single whitespace byte before raster")),
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!(
                "raster truncated: expected {need} bytes, found {}",
                raster.len()
            ),
        });
    }
    let pixels = raster[..need].iter().map(|&v| v as f64 / 255.0).collect();
    GrayImage::new(height, width, pixels)
}

/// 8-bit quantisation used when saving.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| quantize(v)));
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
