use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EmapTensor, Image};

/// LR-resolution feature tensor, channel-fastest like EMAP.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument("feature map dims must be positive".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "features {height}x{width}x{channels} need {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature map contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let c = planes.len();
        let mut data = vec![0f32; height * width * c];
        for (ci, p) in planes.iter().enumerate() {
            for (i, &v) in p.iter().enumerate() {
                data[i * c + ci] = v as f32;
            }
        }
        Self::new(height, width, c, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| f64::from(v))
            .collect()
    }

    pub fn to_tensor(&self) -> EmapTensor {
        EmapTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.clone(),
        }
    }

    pub fn from_tensor(t: EmapTensor) -> Result<Self> {
        Self::new(t.height, t.width, t.channels, t.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Image channels only.
    Identity,
    /// Image channels, luminance gradients (x, y) and 3x3 luminance variance.
    #[default]
    Handcrafted,
}

impl FeatureMode {
    pub fn n_channels(self, image_channels: usize) -> usize {
        match self {
            FeatureMode::Identity => image_channels,
            FeatureMode::Handcrafted => image_channels + 3,
        }
    }
}

/// Stand-in encoder producing LR-resolution features from the LR image.
pub fn extract_features(lr: &Image, mode: FeatureMode) -> FeatureMap {
    let (h, w, c) = lr.dims();
    let mut planes: Vec<Vec<f64>> = (0..c).map(|ci| lr.plane(ci)).collect();
    if mode == FeatureMode::Handcrafted {
        let lum = lr.luminance();
        let at = |y: usize, x: usize| lum[y * w + x];
        let mut gx = vec![0f64; h * w];
        let mut gy = vec![0f64; h * w];
        let mut var = vec![0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                gx[y * w + x] = (at(y, xr) - at(y, xl)) / 2.0;
                gy[y * w + x] = (at(yd, x) - at(yu, x)) / 2.0;
                let mut s = 0.0;
                let mut s2 = 0.0;
                for dy in 0..3 {
                    let yy = (y + dy).saturating_sub(1).min(h - 1);
                    for dx in 0..3 {
                        let xx = (x + dx).saturating_sub(1).min(w - 1);
                        let v = at(yy, xx);
                        s += v;
                        s2 += v * v;
                    }
                }
                let mean = s / 9.0;
                var[y * w + x] = (s2 / 9.0 - mean * mean).max(0.0);
            }
        }
        planes.extend([gx, gy, var]);
    }
    FeatureMap::from_planes(h, w, &planes).expect("planes built from a valid image")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_copies_channels() {
        let img = Image::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let f = extract_features(&img, FeatureMode::Identity);
        assert_eq!(f.channels(), 3);
        assert_eq!(f.data(), img.data());
    }

    #[test]
    fn handcrafted_on_constant_is_zero_beyond_image() {
        let img = Image::filled(4, 5, 3, 0.4).unwrap();
        let f = extract_features(&img, FeatureMode::Handcrafted);
        assert_eq!(f.channels(), 6);
        for c in 3..6 {
            assert!(f.plane(c).iter().all(|&v| v.abs() < 1e-7));
        }
    }

    #[test]
    fn handcrafted_step_edge_gradient() {
        // columns 0..2 dark (0), columns 2..4 bright (1)
        let data: Vec<f32> = (0..16).map(|i| if i % 4 < 2 { 0.0 } else { 1.0 }).collect();
        let img = Image::new(4, 4, 1, data).unwrap();
        let f = extract_features(&img, FeatureMode::Handcrafted);
        let gx = f.plane(1);
        let gy = f.plane(2);
        for y in 0..4 {
            // central differences: (L[x+1] - L[x-1]) / 2
            assert_eq!(&gx[y * 4..y * 4 + 4], &[0.0, 0.5, 0.5, 0.0]);
        }
        assert!(gy.iter().all(|&v| v == 0.0));
        let var = f.plane(3);
        // 3x3 window at column 1 sees columns 0,1,2: values 0,0,1 -> var = 1/3 - 1/9
        assert!((var[5] - (1.0 / 3.0 - 1.0 / 9.0)).abs() < 1e-6);
    }
}
