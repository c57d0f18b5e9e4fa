//! ENET parameter container.
//!
//! `b"ENET"`, version `u8 = 1`, then `n_blocks`, `width`, `in_channels`, `scale`,
//! `flags` as little-endian `u32`, then float32 tensors in declaration order:
//! per block `conv_w, conv_b, gamma, beta, running_mean, running_var`, then
//! `head_w, head_b`.

use std::path::Path;

use super::model::{Architecture, BlockOrder, BlockParams, ErrNetParams, FLAG_BN_BEFORE_RELU};
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};
use crate::raster::ScaleFactor;

pub const ENET_MAGIC: [u8; 4] = *b"ENET";
pub const ENET_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 5 * 4;

pub fn encode_params(p: &ErrNetParams) -> Vec<u8> {
    let a = &p.arch;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * (p.n_trainable() + 2 * a.width * a.n_blocks));
    out.extend_from_slice(&ENET_MAGIC);
    out.push(ENET_VERSION);
    for v in [a.n_blocks, a.width, a.in_channels, a.scale.get(), a.flags() as usize] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let mut put = |t: &[f32]| {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for b in &p.blocks {
        for t in [&b.conv_w, &b.conv_b, &b.gamma, &b.beta, &b.running_mean, &b.running_var] {
            put(t);
        }
    }
    put(&p.head_w);
    put(&p.head_b);
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<ErrNetParams> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("params header", "file shorter than header"));
    }
    if bytes[..4] != ENET_MAGIC {
        return Err(Error::format("params header", "bad magic"));
    }
    if bytes[4] != ENET_VERSION {
        return Err(Error::format("params header", format!("unsupported version {}", bytes[4])));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let flags = field(4);
    if flags & !FLAG_BN_BEFORE_RELU != 0 {
        return Err(Error::format("params header", format!("unknown flags {flags:#x}")));
    }
    let arch = Architecture {
        n_blocks: field(0) as usize,
        width: field(1) as usize,
        in_channels: field(2) as usize,
        scale: ScaleFactor::new(field(3)).map_err(|e| Error::format("params header", e.to_string()))?,
        order: if flags & FLAG_BN_BEFORE_RELU != 0 {
            BlockOrder::ConvBnRelu
        } else {
            BlockOrder::ConvReluBn
        },
    };
    arch.validate().map_err(|e| Error::format("params header", e.to_string()))?;
    let w = arch.width;
    let mut expected = w + 1;
    for b in 0..arch.n_blocks {
        expected += w * arch.block_in(b) * 9 + 5 * w;
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * expected {
        return Err(Error::format(
            "params payload",
            format!("expected {} bytes for the header's architecture, found {}", 4 * expected, payload.len()),
        ));
    }
    let mut floats = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
    let blocks = (0..arch.n_blocks)
        .map(|b| BlockParams {
            conv_w: take(w * arch.block_in(b) * 9),
            conv_b: take(w),
            gamma: take(w),
            beta: take(w),
            running_mean: take(w),
            running_var: take(w),
        })
        .collect();
    let p = ErrNetParams {
        arch,
        blocks,
        head_w: take(w),
        head_b: take(1),
    };
    if !p.is_finite() {
        return Err(Error::format("params payload", "non-finite weight"));
    }
    if p.blocks.iter().any(|b| b.running_var.iter().any(|&v| v < 0.0)) {
        return Err(Error::format("params payload", "negative running variance"));
    }
    Ok(p)
}

pub fn save_params(p: &ErrNetParams, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_params(p))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ErrNetParams> {
    decode_params(&read_bytes(path.as_ref())?)
}
