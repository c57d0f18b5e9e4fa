use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::resample::Resampler;
use super::{Image, ScaleFactor};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Bicubic downsample by `s`, then i.i.d. Gaussian noise of std `noise_sigma`, then clamp.
pub fn degrade(hr: &Image, s: ScaleFactor, noise_sigma: f64, seed: u64) -> Result<Image> {
    let s = s.get();
    if hr.height() % s != 0 || hr.width() % s != 0 {
        return Err(Error::InvalidArgument(format!(
            "HR dims {}x{} not divisible by scale {s}",
            hr.height(),
            hr.width()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad noise sigma {noise_sigma}")));
    }
    let (lh, lw) = (hr.height() / s, hr.width() / s);
    let r = Resampler::new(hr.height(), hr.width(), lh, lw)?;
    let mut planes: Vec<Vec<f64>> = (0..hr.channels()).map(|c| r.apply(&hr.plane(c))).collect();
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
        let mut rng = seeded(seed);
        // noise drawn pixel-major, channel-fastest
        for i in 0..lh * lw {
            for plane in planes.iter_mut() {
                plane[i] += normal.sample(&mut rng);
            }
        }
    }
    Image::from_planes(lh, lw, &planes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SrMode {
    #[default]
    Plain,
    /// Adds a 3x3 unsharp mask (amount 0.5) for over/under-shoot near edges.
    Sharpen,
}

const UNSHARP_AMOUNT: f64 = 0.5;

/// Stand-in super-resolution operator: bicubic upsampling, optionally sharpened.
pub fn sr_standin(lr: &Image, s: ScaleFactor, mode: SrMode) -> Result<Image> {
    let (h, w) = (lr.height() * s.get(), lr.width() * s.get());
    let r = Resampler::new(lr.height(), lr.width(), h, w)?;
    let planes: Vec<Vec<f64>> = (0..lr.channels())
        .map(|c| {
            let up = r.apply(&lr.plane(c));
            match mode {
                SrMode::Plain => up,
                SrMode::Sharpen => {
                    let blur = gaussian3x3(&up, h, w);
                    up.iter()
                        .zip(blur)
                        .map(|(&u, b)| u + UNSHARP_AMOUNT * (u - b))
                        .collect()
                }
            }
        })
        .collect();
    Image::from_planes(h, w, &planes)
}

/// `[1 2 1]^T [1 2 1] / 16` with clamped borders.
fn gaussian3x3(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let mut out = vec![0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, ky) in K.iter().enumerate() {
                let sy = (y + dy).saturating_sub(1).min(h - 1);
                for (dx, kx) in K.iter().enumerate() {
                    let sx = (x + dx).saturating_sub(1).min(w - 1);
                    acc += ky * kx * src[sy * w + sx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::resize_bicubic;

    fn s(v: u32) -> ScaleFactor {
        ScaleFactor::new(v).unwrap()
    }

    #[test]
    fn zero_noise_is_pure_downsample() {
        let data: Vec<f32> = (0..8 * 8).map(|i| (i % 8) as f32 / 7.0).collect();
        let hr = Image::new(8, 8, 1, data).unwrap();
        assert_eq!(degrade(&hr, s(2), 0.0, 9).unwrap(), resize_bicubic(&hr, 4, 4).unwrap());
    }

    #[test]
    fn deterministic_in_seed() {
        let hr = Image::filled(16, 16, 3, 0.5).unwrap();
        let a = degrade(&hr, s(4), 0.03, 42).unwrap();
        assert_eq!(a, degrade(&hr, s(4), 0.03, 42).unwrap());
        assert_ne!(a, degrade(&hr, s(4), 0.03, 43).unwrap());
    }

    #[test]
    fn noise_std_matches_sigma() {
        let sigma = 0.05;
        let hr = Image::filled(512, 512, 1, 0.5).unwrap();
        let lr = degrade(&hr, s(2), sigma, 7).unwrap();
        assert_eq!(lr.dims(), (256, 256, 1));
        let n = lr.data().len() as f64;
        let mean = lr.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = lr.data().iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - sigma).abs() < 0.05 * sigma, "std {}", var.sqrt());
    }

    #[test]
    fn non_divisible_dims_rejected() {
        let hr = Image::filled(10, 9, 1, 0.5).unwrap();
        assert!(degrade(&hr, s(2), 0.0, 0).is_err());
    }

    #[test]
    fn plain_standin_keeps_constants() {
        let lr = Image::filled(5, 7, 3, 0.61).unwrap();
        let up = sr_standin(&lr, s(3), SrMode::Plain).unwrap();
        assert_eq!(up.dims(), (15, 21, 3));
        assert!(up.data().iter().all(|v| (v - 0.61).abs() < 1e-6));
        let sharp = sr_standin(&lr, s(3), SrMode::Sharpen).unwrap();
        assert!(sharp.data().iter().all(|v| (v - 0.61).abs() < 1e-6));
    }

    #[test]
    fn smooth_scene_round_trip_residual_is_small() {
        let (h, w) = (64, 64);
        let data: Vec<f32> = (0..h * w)
            .map(|i| {
                let (y, x) = ((i / w) as f32, (i % w) as f32);
                0.5 + 0.3 * (x / 20.0).sin() * (y / 25.0).cos()
            })
            .collect();
        let hr = Image::new(h, w, 1, data).unwrap();
        let lr = degrade(&hr, s(2), 0.0, 0).unwrap();
        let sr = sr_standin(&lr, s(2), SrMode::Plain).unwrap();
        let mse: f64 = hr
            .data()
            .iter()
            .zip(sr.data())
            .map(|(a, b)| f64::from(a - b).powi(2))
            .sum::<f64>()
            / (h * w) as f64;
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn sharpen_differs_near_edges_only() {
        let data: Vec<f32> = (0..16 * 16).map(|i| if i % 16 < 8 { 0.2 } else { 0.8 }).collect();
        let lr = Image::new(16, 16, 1, data).unwrap();
        let plain = sr_standin(&lr, s(2), SrMode::Plain).unwrap();
        let sharp = sr_standin(&lr, s(2), SrMode::Sharpen).unwrap();
        let diff = |x: usize| (plain.get(10, x, 0) - sharp.get(10, x, 0)).abs();
        assert!(diff(15) > 1e-3 || diff(16) > 1e-3);
        assert!(diff(2) < 1e-6);
    }
}
