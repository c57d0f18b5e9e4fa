//! Raster containers, PNM/EMAP file I/O, bicubic resampling and the
//! degradation / super-resolution stand-in operators.

mod degrade;
mod emap;
mod image;
mod pnm;
mod resample;

pub use degrade::{degrade, sr_standin, SrMode};
pub use emap::{decode_emap, encode_emap, read_emap, write_emap, EmapTensor, EMAP_MAGIC, EMAP_VERSION};
pub use image::{Image, MapUnit, ScalarMap, ScaleFactor};
pub use pnm::{decode as decode_pnm, encode as encode_pnm, read_image, write_image};
pub use resample::{keys_kernel, resize_bicubic, Resampler};
