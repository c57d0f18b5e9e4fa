//! Ground-truth per-pixel error maps and oracle failure masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EmapTensor, Image, MapUnit, ScalarMap};

/// Zero-error pixels (and anything above it) are reported at this PSNR.
pub const DEFAULT_PSNR_CAP_DB: f64 = 99.0;

/// PSNR cutoff in dB; a pixel at or below it counts as a reconstruction failure.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FailureLevel(f64);

impl FailureLevel {
    pub fn new(tau_fail_db: f64) -> Result<Self> {
        if !tau_fail_db.is_finite() || tau_fail_db < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "failure level must be finite and >= 0 dB, got {tau_fail_db}"
            )));
        }
        Ok(Self(tau_fail_db))
    }

    pub fn db(self) -> f64 {
        self.0
    }

    /// Squared-error threshold equivalent to this level (`MAX = 1`).
    pub fn squared_error_threshold(self) -> f64 {
        10f64.powf(-self.0 / 10.0)
    }
}

impl TryFrom<f64> for FailureLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FailureLevel> for f64 {
    fn from(l: FailureLevel) -> f64 {
        l.0
    }
}

/// Per-pixel `{0, 1}` mask over the HR domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, data: impl Iterator<Item = bool>) -> Result<Self> {
        Self::new(height, width, data.map(u8::from).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Stored as 0.0 / 1.0 float32 in EMAP.
    pub fn to_tensor(&self) -> EmapTensor {
        EmapTensor {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.iter().map(|&v| f32::from(v)).collect(),
        }
    }

    pub fn from_tensor(t: EmapTensor) -> Result<Self> {
        if t.channels != 1 {
            return Err(Error::Shape(format!("mask must have 1 channel, got {}", t.channels)));
        }
        let data = t
            .data
            .iter()
            .map(|&v| match v {
                v if v == 0.0 => Ok(0u8),
                v if v == 1.0 => Ok(1u8),
                v => Err(Error::format("mask", format!("value {v} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(t.height, t.width, data)
    }
}

fn check_same_dims(pred: &Image, reference: &Image) -> Result<()> {
    if pred.dims() != reference.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs reference {:?}",
            pred.dims(),
            reference.dims()
        )));
    }
    Ok(())
}

fn channel_mean_se(pred: &Image, reference: &Image) -> Vec<f64> {
    let c = pred.channels();
    pred.data()
        .chunks_exact(c)
        .zip(reference.data().chunks_exact(c))
        .map(|(p, r)| {
            p.iter()
                .zip(r)
                .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                .sum::<f64>()
                / c as f64
        })
        .collect()
}

/// Channel-mean squared difference per pixel.
pub fn squared_error_map(pred: &Image, reference: &Image) -> Result<ScalarMap> {
    check_same_dims(pred, reference)?;
    let se = channel_mean_se(pred, reference);
    ScalarMap::new(
        pred.height(),
        pred.width(),
        MapUnit::SquaredIntensity,
        se.into_iter().map(|v| v as f32).collect(),
    )
}

/// `10 log10(1 / mse)`, with zero error or anything above `cap_db` reported as `cap_db`.
pub fn psnr_from_mse(mse: f64, cap_db: f64) -> f64 {
    if mse <= 0.0 {
        return cap_db;
    }
    (-10.0 * mse.log10()).min(cap_db)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrOptions {
    pub cap_db: f64,
    /// Odd box-window side for local SE averaging; `None` is pointwise.
    pub window: Option<usize>,
}

impl Default for PsnrOptions {
    fn default() -> Self {
        Self {
            cap_db: DEFAULT_PSNR_CAP_DB,
            window: None,
        }
    }
}

/// Pointwise PSNR map in dB with the default 99 dB cap.
pub fn psnr_map(pred: &Image, reference: &Image) -> Result<ScalarMap> {
    psnr_map_with(pred, reference, PsnrOptions::default())
}

pub fn psnr_map_with(pred: &Image, reference: &Image, opts: PsnrOptions) -> Result<ScalarMap> {
    check_same_dims(pred, reference)?;
    if !opts.cap_db.is_finite() || opts.cap_db <= 0.0 {
        return Err(Error::InvalidArgument(format!("bad PSNR cap {}", opts.cap_db)));
    }
    let (h, w) = (pred.height(), pred.width());
    let mut se = channel_mean_se(pred, reference);
    if let Some(win) = opts.window {
        if win % 2 == 0 {
            return Err(Error::InvalidArgument(format!("PSNR window must be odd, got {win}")));
        }
        se = box_mean(&se, h, w, win / 2);
    }
    let data = se
        .into_iter()
        .map(|v| psnr_from_mse(v, opts.cap_db) as f32)
        .collect();
    ScalarMap::new(h, w, MapUnit::Decibels, data)
}

fn box_mean(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            let mut acc = 0.0;
            for yy in y0..=y1 {
                acc += src[yy * w + x0..=yy * w + x1].iter().sum::<f64>();
            }
            out[y * w + x] = acc / ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
        }
    }
    out
}

/// Oracle failure mask: 1 where PSNR <= `level`.
pub fn failure_mask(psnr: &ScalarMap, level: FailureLevel) -> BinaryMask {
    let tau = level.db();
    BinaryMask {
        height: psnr.height(),
        width: psnr.width(),
        data: psnr.data().iter().map(|&v| u8::from(f64::from(v) <= tau)).collect(),
    }
}

/// PSNR over the accepted pixels, i.e. where `predicted` is 0.
///
/// Returns [`Error::Undefined`] when every pixel is rejected.
pub fn psnr_region(pred: &Image, reference: &Image, predicted: &BinaryMask) -> Result<f64> {
    check_same_dims(pred, reference)?;
    if predicted.height() != pred.height() || predicted.width() != pred.width() {
        return Err(Error::Shape("mask does not match image dims".into()));
    }
    let se = channel_mean_se(pred, reference);
    let (sum, n) = accepted_se_sum(&se, predicted.data());
    if n == 0 {
        return Err(Error::Undefined("no accepted pixels".into()));
    }
    Ok(psnr_from_mse(sum / n as f64, DEFAULT_PSNR_CAP_DB))
}

/// Sum of squared error and count over pixels with mask value 0.
pub fn accepted_se_sum<T: Copy + Into<f64>>(se: &[T], mask: &[u8]) -> (f64, usize) {
    se.iter()
        .zip(mask)
        .filter(|(_, &m)| m == 0)
        .fold((0.0, 0), |(s, n), (&v, _)| (s + v.into(), n + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, c: usize, data: Vec<f32>) -> Image {
        Image::new(h, w, c, data).unwrap()
    }

    #[test]
    fn squared_error_examples() {
        let a = img(1, 1, 1, vec![0.5]);
        let b = img(1, 1, 1, vec![0.0]);
        assert_eq!(squared_error_map(&a, &b).unwrap().data(), &[0.25]);
        assert!(squared_error_map(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));

        let p = img(1, 1, 3, vec![0.6, 0.7, 0.7]);
        let r = img(1, 1, 3, vec![0.5, 0.5, 0.5]);
        let se = squared_error_map(&p, &r).unwrap().data()[0];
        assert!((se - 0.03).abs() < 1e-7);

        assert!(squared_error_map(&a, &img(1, 2, 1, vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = img(2, 2, 1, vec![0.3; 4]);
        assert!(psnr_map(&a, &a).unwrap().data().iter().all(|&v| v == 99.0));
        let b = img(2, 2, 1, vec![0.4; 4]);
        let p = psnr_map(&a, &b).unwrap();
        assert!(p.data().iter().all(|&v| (v - 20.0).abs() < 1e-4));
        let zero = img(1, 1, 1, vec![0.0]);
        let one = img(1, 1, 1, vec![1.0]);
        assert_eq!(psnr_map(&zero, &one).unwrap().data(), &[0.0]);
    }

    #[test]
    fn windowed_psnr_averages_error() {
        let pred = img(1, 3, 1, vec![0.0, 0.1, 0.0]);
        let reference = img(1, 3, 1, vec![0.0; 3]);
        let opts = PsnrOptions {
            window: Some(3),
            ..Default::default()
        };
        let p = psnr_map_with(&pred, &reference, opts).unwrap();
        // centre window sees se = 0.01 / 3
        assert!((f64::from(p.data()[1]) - psnr_from_mse(0.01 / 3.0, 99.0)).abs() < 1e-4);
        assert!(psnr_map_with(&pred, &reference, PsnrOptions { window: Some(2), ..opts }).is_err());
    }

    #[test]
    fn failure_mask_examples() {
        let m = ScalarMap::new(1, 3, MapUnit::Decibels, vec![20.0, 22.0, 24.0]).unwrap();
        let l = |v| FailureLevel::new(v).unwrap();
        assert_eq!(failure_mask(&m, l(22.0)).data(), &[1, 1, 0]);
        let capped = ScalarMap::new(1, 2, MapUnit::Decibels, vec![99.0, 99.0]).unwrap();
        assert_eq!(failure_mask(&capped, l(0.0)).count_ones(), 0);
        assert_eq!(failure_mask(&capped, l(99.0)).count_ones(), 2);
        assert!(FailureLevel::new(-1.0).is_err());
        assert!(FailureLevel::new(f64::NAN).is_err());
    }

    #[test]
    fn region_psnr_examples() {
        let a = img(2, 2, 1, vec![0.3; 4]);
        let none = BinaryMask::zeros(2, 2);
        assert_eq!(psnr_region(&a, &a, &none).unwrap(), 99.0);

        // left column clean, right column corrupted; reject the right column
        let reference = img(2, 2, 1, vec![0.5; 4]);
        let pred = img(2, 2, 1, vec![0.5, 0.9, 0.5, 0.1]);
        let reject_right = BinaryMask::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(psnr_region(&pred, &reference, &reject_right).unwrap(), 99.0);

        let b = img(2, 2, 1, vec![0.4; 4]);
        assert!((psnr_region(&a, &b, &none).unwrap() - 20.0).abs() < 1e-5);

        let all = BinaryMask::new(2, 2, vec![1; 4]).unwrap();
        assert!(matches!(psnr_region(&a, &b, &all), Err(Error::Undefined(_))));
    }

    #[test]
    fn mask_tensor_round_trip() {
        let m = BinaryMask::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(BinaryMask::from_tensor(m.to_tensor()).unwrap(), m);
        let bad = EmapTensor::new(1, 1, 1, vec![0.5]).unwrap();
        assert!(BinaryMask::from_tensor(bad).is_err());
    }

    proptest! {
        #[test]
        fn psnr_mask_equals_se_threshold(
            data in proptest::collection::vec((0f32..=1.0, 0f32..=1.0), 1..64),
            tau in 5.0f64..40.0,
        ) {
            let n = data.len();
            let pred = img(1, n, 1, data.iter().map(|d| d.0).collect());
            let reference = img(1, n, 1, data.iter().map(|d| d.1).collect());
            let level = FailureLevel::new(tau).unwrap();
            let mask = failure_mask(&psnr_map(&pred, &reference).unwrap(), level);
            let se = squared_error_map(&pred, &reference).unwrap();
            let thr = level.squared_error_threshold();
            for (m, &s) in mask.data().iter().zip(se.data()) {
                let s = f64::from(s);
                // skip values within float rounding of the boundary
                if (s - thr).abs() > 1e-6 * thr {
                    prop_assert_eq!(*m == 1, s >= thr);
                }
            }
        }

        #[test]
        fn failure_mask_monotone_in_level(
            psnr in proptest::collection::vec(0f32..60.0, 1..64),
            a in 0f64..60.0,
            b in 0f64..60.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m = ScalarMap::new(1, psnr.len(), MapUnit::Decibels, psnr).unwrap();
            let small = failure_mask(&m, FailureLevel::new(lo).unwrap());
            let big = failure_mask(&m, FailureLevel::new(hi).unwrap());
            for (s, b) in small.data().iter().zip(big.data()) {
                prop_assert!(s <= b);
            }
        }
    }
}
