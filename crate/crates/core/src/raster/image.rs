use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense float raster with values in `[0, 1]`, row-major and channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image, checking the length, channel count and value range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "image {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "image value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image from arbitrary finite values, clamping them into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
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

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// One channel as a row-major `f64` plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| f64::from(v))
            .collect()
    }

    /// Per-pixel luminance (Rec. 601 weights for colour, identity for grey).
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.plane(0);
        }
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect()
    }

    /// Reassembles an image from per-channel planes, clamping to `[0, 1]`.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0f32; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != height * width {
                return Err(Error::Shape("plane length does not match dims".into()));
            }
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = v.clamp(0.0, 1.0) as f32;
            }
        }
        Self::new(height, width, channels, data)
    }
}

/// Physical meaning of the values in a [`ScalarMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapUnit {
    /// Channel-mean squared intensity difference.
    SquaredIntensity,
    Decibels,
    /// Predicted error score, only meaningful ordinally.
    Score,
}

/// Single-channel float raster (error maps, score maps, PSNR maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    unit: MapUnit,
    data: Vec<f32>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, unit: MapUnit, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("scalar map contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            unit,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn unit(&self) -> MapUnit {
        self.unit
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn with_unit(mut self, unit: MapUnit) -> Self {
        self.unit = unit;
        self
    }
}

/// Integer super-resolution factor, always greater than one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ScaleFactor(u32);

impl ScaleFactor {
    pub fn new(s: u32) -> Result<Self> {
        if s < 2 {
            return Err(Error::InvalidArgument(format!("scale factor must be > 1, got {s}")));
        }
        Ok(Self(s))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u32> for ScaleFactor {
    type Error = Error;

    fn try_from(s: u32) -> Result<Self> {
        Self::new(s)
    }
}

impl From<ScaleFactor> for u32 {
    fn from(s: ScaleFactor) -> u32 {
        s.0
    }
}

impl std::fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(Image::new(1, 2, 1, vec![0.5]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn scale_factor_must_exceed_one() {
        assert!(ScaleFactor::new(1).is_err());
        assert_eq!(ScaleFactor::new(4).unwrap().get(), 4);
    }

    #[test]
    fn planes_round_trip() {
        let img = Image::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let planes: Vec<_> = (0..3).map(|c| img.plane(c)).collect();
        assert_eq!(planes[1], vec![f64::from(0.2f32), f64::from(0.5f32)]);
        assert_eq!(Image::from_planes(1, 2, &planes).unwrap(), img);
    }
}
