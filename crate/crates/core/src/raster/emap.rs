//! EMAP: a minimal little-endian float32 tensor container.
//!
//! Layout: `b"EMAP"`, version `u8 = 1`, dtype `u8 = 0` (float32), reserved `u16 = 0`,
//! then `H`, `W`, `C` as `u32`, followed by `H*W*C` float32 values, row-major,
//! channel-fastest.

use std::path::Path;

use super::{Image, MapUnit, ScalarMap};
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};

pub const EMAP_MAGIC: [u8; 4] = *b"EMAP";
pub const EMAP_VERSION: u8 = 1;
const HEADER_LEN: usize = 20;

/// Raw `H x W x C` float tensor as stored in an EMAP file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmapTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl EmapTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "tensor {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn into_scalar_map(self, unit: MapUnit) -> Result<ScalarMap> {
        if self.channels != 1 {
            return Err(Error::Shape(format!(
                "expected a single-channel map, got {} channels",
                self.channels
            )));
        }
        ScalarMap::new(self.height, self.width, unit, self.data)
    }

    pub fn into_image(self) -> Result<Image> {
        Image::new(self.height, self.width, self.channels, self.data)
    }
}

impl From<&ScalarMap> for EmapTensor {
    fn from(m: &ScalarMap) -> Self {
        Self {
            height: m.height(),
            width: m.width(),
            channels: 1,
            data: m.data().to_vec(),
        }
    }
}

impl From<&Image> for EmapTensor {
    fn from(img: &Image) -> Self {
        Self {
            height: img.height(),
            width: img.width(),
            channels: img.channels(),
            data: img.data().to_vec(),
        }
    }
}

pub fn encode_emap(t: &EmapTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.data.len());
    out.extend_from_slice(&EMAP_MAGIC);
    out.push(EMAP_VERSION);
    out.push(0);
    out.extend_from_slice(&0u16.to_le_bytes());
    for d in [t.height, t.width, t.channels] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_emap(bytes: &[u8]) -> Result<EmapTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("emap header", "file shorter than header"));
    }
    if bytes[..4] != EMAP_MAGIC {
        return Err(Error::format("emap header", "bad magic"));
    }
    if bytes[4] != EMAP_VERSION {
        return Err(Error::format("emap header", format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != 0 {
        return Err(Error::format("emap header", format!("unsupported dtype {}", bytes[5])));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (height, width, channels) = (dim(8), dim(12), dim(16));
    let count = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("emap header", "dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::format(
            "emap payload",
            format!(
                "header says {height}x{width}x{channels} ({} bytes), payload has {}",
                count * 4,
                payload.len()
            ),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format("emap payload", "non-finite value"));
    }
    EmapTensor::new(height, width, channels, data)
}

pub fn read_emap(path: impl AsRef<Path>) -> Result<EmapTensor> {
    decode_emap(&read_bytes(path.as_ref())?)
}

pub fn write_emap(t: &EmapTensor, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_emap(t))
}
