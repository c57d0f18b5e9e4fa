//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::path::Path;

use super::Image;
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode(&read_bytes(path.as_ref())?)
}

pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode(img))
}

/// Quantizes with `round(x * 255)`.
pub fn encode(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v * 255.0).round() as u8));
    out
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut cursor = Header { bytes, pos: 0 };
    let magic = cursor.token()?;
    let channels = match magic.as_slice() {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::format(
                "pnm header",
                format!("unsupported magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if maxval != 255 {
        return Err(Error::format("pnm header", format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("pnm header", "zero dimension"));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::format("pnm header", "missing separator before payload")),
    }
    let expected = width * height * channels;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(Error::format(
            "pnm payload",
            format!("truncated: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    let data = payload[..expected].iter().map(|&b| f32::from(b) / 255.0).collect();
    Image::new(height, width, channels, data)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
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

    fn token(&mut self) -> Result<Vec<u8>> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("pnm header", "unexpected end of header"));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::format("pnm header", format!("bad number {:?}", String::from_utf8_lossy(&tok)))
            })
    }
}
