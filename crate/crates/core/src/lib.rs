//! Conformal failure masks for super-resolution.
//!
//! A small convolutional regressor predicts per-pixel reconstruction error from
//! low-resolution features; conformal risk control then turns those scores into
//! binary masks whose pooled false-negative rate is bounded by a chosen `alpha`
//! at a chosen PSNR failure level.

pub mod conformal;
pub mod dataset;
pub mod demo;
pub mod errormaps;
pub mod errnet;
pub mod error;
pub mod eval;
pub mod io;
pub mod raster;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
