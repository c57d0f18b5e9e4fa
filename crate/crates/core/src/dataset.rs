//! Loading manifest frames into memory.

use std::path::Path;

use rayon::prelude::*;

use crate::errnet::{extract_features, FeatureMap, FeatureMode, TrainSample};
use crate::errormaps::squared_error_map;
use crate::error::{Error, Result};
use crate::raster::{read_emap, read_image, sr_standin, Image, ScaleFactor, SrMode};
use crate::synth::DatasetManifest;

#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub video: usize,
    pub frame: usize,
    pub hr: Image,
    /// Reconstruction under evaluation.
    pub sr: Image,
    pub features: FeatureMap,
}

/// Reads a PPM/PGM, or an EMAP float image when the extension is `.emap`.
pub fn read_any_image(path: &Path) -> Result<Image> {
    if path.extension().is_some_and(|e| e == "emap") {
        read_emap(path)?.into_image()
    } else {
        read_image(path)
    }
}

fn scale_between(hr: &Image, lr: &Image) -> Result<ScaleFactor> {
    let (hh, hw) = (hr.height(), hr.width());
    let (lh, lw) = (lr.height(), lr.width());
    if hh % lh != 0 || hw % lw != 0 || hh / lh != hw / lw {
        return Err(Error::Shape(format!("HR {hh}x{hw} is not an integer multiple of LR {lh}x{lw}")));
    }
    ScaleFactor::new((hh / lh) as u32)
}

/// Loads every frame of the given videos. Missing SR outputs fall back to the plain
/// bicubic stand-in; missing features are extracted from the LR frame.
pub fn load_frames(manifest: &DatasetManifest, videos: &[usize], mode: FeatureMode) -> Result<Vec<LoadedFrame>> {
    let jobs: Vec<(usize, usize)> = videos
        .iter()
        .flat_map(|&v| (0..manifest.videos[v].frames.len()).map(move |f| (v, f)))
        .collect();
    let frames = jobs
        .par_iter()
        .map(|&(v, f)| {
            let rec = &manifest.videos[v].frames[f];
            let hr = read_any_image(&manifest.resolve(&rec.hr))?;
            let lr = read_any_image(&manifest.resolve(&rec.lr))?;
            let s = scale_between(&hr, &lr)?;
            let sr = match &rec.sr {
                Some(p) => read_any_image(&manifest.resolve(p))?,
                None => sr_standin(&lr, s, SrMode::Plain)?,
            };
            if sr.dims() != hr.dims() {
                return Err(Error::Shape(format!(
                    "video {} frame {f}: SR {:?} vs HR {:?}",
                    manifest.videos[v].video_id,
                    sr.dims(),
                    hr.dims()
                )));
            }
            let features = match &rec.feat {
                Some(p) => FeatureMap::from_tensor(read_emap(manifest.resolve(p))?)?,
                None => extract_features(&lr, mode),
            };
            if features.height() * s.get() != hr.height() || features.width() * s.get() != hr.width() {
                return Err(Error::Shape(format!(
                    "video {} frame {f}: features are not at LR resolution",
                    manifest.videos[v].video_id
                )));
            }
            Ok(LoadedFrame {
                video: v,
                frame: f,
                hr,
                sr,
                features,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(frames)
}

/// Training pairs with squared-error targets, grouped by video.
pub fn training_samples(frames: &[LoadedFrame]) -> Result<Vec<TrainSample>> {
    frames
        .par_iter()
        .map(|f| {
            Ok(TrainSample {
                features: f.features.clone(),
                target: squared_error_map(&f.sr, &f.hr)?,
                group: f.video,
            })
        })
        .collect()
}
