//! Separable bicubic resampling with the Keys kernel (a = -0.5).
//!
//! Source coordinate for destination index `d` is `(d + 0.5) * src / dst - 0.5`
//! (pixel-centre alignment); taps outside the source are clamped to the border.

use super::Image;
use crate::error::{Error, Result};

const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_kernel(x: f64) -> f64 {
    let x = x.abs();
    let a = KEYS_A;
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four (source index, weight) taps per destination index along one axis.
#[derive(Debug, Clone, PartialEq)]
struct Taps {
    src_len: usize,
    taps: Vec<[(usize, f64); 4]>,
}

impl Taps {
    fn new(src_len: usize, dst_len: usize) -> Self {
        let ratio = src_len as f64 / dst_len as f64;
        let last = src_len as i64 - 1;
        let taps = (0..dst_len)
            .map(|d| {
                let u = (d as f64 + 0.5) * ratio - 0.5;
                let base = u.floor();
                let t = u - base;
                let base = base as i64;
                let mut out = [(0usize, 0f64); 4];
                for (k, slot) in out.iter_mut().enumerate() {
                    let offset = k as i64 - 1;
                    let idx = (base + offset).clamp(0, last) as usize;
                    *slot = (idx, keys_kernel(t - offset as f64));
                }
                out
            })
            .collect();
        Self { src_len, taps }
    }

    fn dst_len(&self) -> usize {
        self.taps.len()
    }
}

/// Linear bicubic resampling operator between two fixed plane sizes, with its adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampler {
    rows: Taps,
    cols: Taps,
}

impl Resampler {
    pub fn new(src_h: usize, src_w: usize, dst_h: usize, dst_w: usize) -> Result<Self> {
        if src_h == 0 || src_w == 0 || dst_h == 0 || dst_w == 0 {
            return Err(Error::InvalidArgument(format!(
                "resample dims must be positive: {src_h}x{src_w} -> {dst_h}x{dst_w}"
            )));
        }
        Ok(Self {
            rows: Taps::new(src_h, dst_h),
            cols: Taps::new(src_w, dst_w),
        })
    }

    pub fn src_dims(&self) -> (usize, usize) {
        (self.rows.src_len, self.cols.src_len)
    }

    pub fn dst_dims(&self) -> (usize, usize) {
        (self.rows.dst_len(), self.cols.dst_len())
    }

    /// Resamples one row-major plane. No clamping of values.
    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        let (sh, sw) = self.src_dims();
        let (dh, dw) = self.dst_dims();
        debug_assert_eq!(src.len(), sh * sw);
        let mut horiz = vec![0f64; sh * dw];
        for y in 0..sh {
            let row = &src[y * sw..(y + 1) * sw];
            let out = &mut horiz[y * dw..(y + 1) * dw];
            for (o, taps) in out.iter_mut().zip(&self.cols.taps) {
                *o = taps.iter().map(|&(i, w)| w * row[i]).sum();
            }
        }
        let mut dst = vec![0f64; dh * dw];
        for (y, taps) in self.rows.taps.iter().enumerate() {
            let out = &mut dst[y * dw..(y + 1) * dw];
            for &(i, w) in taps {
                let row = &horiz[i * dw..(i + 1) * dw];
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
        dst
    }

    /// Transpose of [`Resampler::apply`]: maps a destination-shaped plane back to source shape.
    pub fn apply_adjoint(&self, dst: &[f64]) -> Vec<f64> {
        let (sh, sw) = self.src_dims();
        let (dh, dw) = self.dst_dims();
        debug_assert_eq!(dst.len(), dh * dw);
        let mut horiz = vec![0f64; sh * dw];
        for (y, taps) in self.rows.taps.iter().enumerate() {
            let g = &dst[y * dw..(y + 1) * dw];
            for &(i, w) in taps {
                let row = &mut horiz[i * dw..(i + 1) * dw];
                for (r, &v) in row.iter_mut().zip(g) {
                    *r += w * v;
                }
            }
        }
        let mut src = vec![0f64; sh * sw];
        for y in 0..sh {
            let g = &horiz[y * dw..(y + 1) * dw];
            let out = &mut src[y * sw..(y + 1) * sw];
            for (taps, &v) in self.cols.taps.iter().zip(g) {
                for &(i, w) in taps {
                    out[i] += w * v;
                }
            }
        }
        src
    }
}

/// Bicubic resize of every channel, output clamped to `[0, 1]`.
pub fn resize_bicubic(img: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    let r = Resampler::new(img.height(), img.width(), target_h, target_w)?;
    let planes: Vec<Vec<f64>> = (0..img.channels()).map(|c| r.apply(&img.plane(c))).collect();
    Image::from_planes(target_h, target_w, &planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_values() {
        assert_eq!(keys_kernel(0.0), 1.0);
        assert_eq!(keys_kernel(1.0), 0.0);
        assert_eq!(keys_kernel(2.0), 0.0);
        assert!((keys_kernel(0.25) - 0.8671875).abs() < 1e-12);
        assert!((keys_kernel(1.25) + 0.0703125).abs() < 1e-12);
    }

    #[test]
    fn constant_image_stays_constant() {
        for (th, tw) in [(7, 13), (3, 2), (16, 16), (1, 1)] {
            let img = Image::filled(5, 6, 3, 0.37).unwrap();
            let out = resize_bicubic(&img, th, tw).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn same_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..5 * 4 * 3).map(|_| rng.gen()).collect();
        let img = Image::new(5, 4, 3, data).unwrap();
        assert_eq!(resize_bicubic(&img, 5, 4).unwrap(), img);
    }

    #[test]
    fn ramp_upscale_matches_hand_evaluated_kernel() {
        // Source coordinates -0.25, 0.25, ..., 3.25 with fractional weights
        // k(1.75), k(0.75), k(0.25), k(1.25) = -0.0234375, 0.2265625, 0.8671875, -0.0703125.
        let img = Image::new(1, 4, 1, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        let out = resize_bicubic(&img, 1, 8).unwrap();
        let expected = [
            0.0, // -0.0703125/3, clamped
            0.2265625 / 3.0 - 0.0234375 * 2.0 / 3.0,
            0.8671875 / 3.0 - 0.0703125 * 2.0 / 3.0,
            1.25 / 3.0,
            1.75 / 3.0,
            1.0 - (0.8671875 / 3.0 - 0.0703125 * 2.0 / 3.0),
            1.0 - (0.2265625 / 3.0 - 0.0234375 * 2.0 / 3.0),
            1.0, // 1 + 0.0703125/3, clamped
        ];
        for (a, b) in out.data().iter().zip(expected) {
            assert!((f64::from(*a) - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (sh, sw, dh, dw) in [(4, 5, 8, 10), (8, 8, 16, 16), (6, 3, 3, 7)] {
            let r = Resampler::new(sh, sw, dh, dw).unwrap();
            let u: Vec<f64> = (0..sh * sw).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..dh * dw).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = r.apply(&u).iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(r.apply_adjoint(&v)).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_dims_rejected() {
        let img = Image::filled(2, 2, 1, 0.5).unwrap();
        assert!(resize_bicubic(&img, 0, 2).is_err());
    }
}
