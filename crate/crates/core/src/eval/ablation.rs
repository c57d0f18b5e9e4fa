//! Failure-detection quality of the error network across model and data sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auroc, fpr95};
use super::trials::EvalFrame;
use crate::dataset::{load_frames, training_samples, LoadedFrame};
use crate::errnet::{predict, train, Architecture, BlockOrder, ErrNetParams, FeatureMode, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::errormaps::{failure_mask, psnr_map, squared_error_map, FailureLevel};
use crate::raster::ScaleFactor;
use crate::synth::{DatasetManifest, Split};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub auroc: f64,
    pub fpr95: f64,
    /// Share of failure pixels among all scored pixels.
    pub positive_fraction: f64,
}

/// AUROC and FPR95 of the frame scores against oracle failures at `tau_fail`.
///
/// Pooled over every pixel by default; with `per_image` both metrics are averaged
/// over the images that contain both classes.
pub fn detection_metrics(frames: &[EvalFrame], tau_fail: f64, per_image: bool) -> Result<DetectionMetrics> {
    let level = FailureLevel::new(tau_fail)?;
    let labelled: Vec<(Vec<f64>, Vec<u8>)> = frames
        .par_iter()
        .map(|f| {
            let m = failure_mask(&f.psnr, level);
            (f.scores.data().iter().map(|&s| f64::from(s)).collect(), m.data().to_vec())
        })
        .collect();
    let total: usize = labelled.iter().map(|(s, _)| s.len()).sum();
    let positives: usize = labelled.iter().map(|(_, l)| l.iter().filter(|&&v| v == 1).count()).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no pixels to score".into()));
    }
    let positive_fraction = positives as f64 / total as f64;
    if per_image {
        let per: Vec<(f64, f64)> = labelled
            .iter()
            .filter_map(|(s, l)| Some((auroc(s, l).ok()?, fpr95(s, l).ok()?)))
            .collect();
        if per.is_empty() {
            return Err(Error::Undefined(format!("no image has both classes at {tau_fail} dB")));
        }
        let n = per.len() as f64;
        return Ok(DetectionMetrics {
            auroc: per.iter().map(|p| p.0).sum::<f64>() / n,
            fpr95: per.iter().map(|p| p.1).sum::<f64>() / n,
            positive_fraction,
        });
    }
    let (scores, labels): (Vec<f64>, Vec<u8>) = labelled
        .into_iter()
        .flat_map(|(s, l)| s.into_iter().zip(l))
        .unzip();
    Ok(DetectionMetrics {
        auroc: auroc(&scores, &labels)?,
        fpr95: fpr95(&scores, &labels)?,
        positive_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    NBlocks,
    Width,
    NTrainVideos,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::NBlocks => "n_blocks",
            AblationAxis::Width => "width",
            AblationAxis::NTrainVideos => "n_train_videos",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub n_blocks: usize,
    pub width: usize,
    pub order: BlockOrder,
    /// Train-tagged videos used when the axis is not `n_train_videos`; 0 means all.
    pub n_train_videos: usize,
    pub feature_mode: FeatureMode,
    pub tau_fail: f64,
    pub per_image: bool,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            n_blocks: 2,
            width: 64,
            order: BlockOrder::default(),
            n_train_videos: 0,
            feature_mode: FeatureMode::default(),
            tau_fail: 22.0,
            per_image: false,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub value: usize,
    pub auroc: f64,
    pub fpr95: f64,
    pub positive_fraction: f64,
    pub final_loss: f64,
}

pub const ABLATION_HEADER: [&str; 6] = ["axis", "value", "auroc", "fpr95", "positive_fraction", "final_loss"];

/// Fits an error network on loaded frames.
pub fn fit(
    frames: &[LoadedFrame],
    n_blocks: usize,
    width: usize,
    order: BlockOrder,
    cfg: &TrainConfig,
) -> Result<(ErrNetParams, TrainReport)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training frames".into()))?;
    let scale = ScaleFactor::new((first.hr.height() / first.features.height()) as u32)?;
    let arch = Architecture {
        n_blocks,
        width,
        in_channels: first.features.channels(),
        scale,
        order,
    };
    let samples = training_samples(frames)?;
    train(&samples, arch, cfg)
}

/// Scores frames with a trained network.
pub fn score_frames(params: &ErrNetParams, frames: &[LoadedFrame]) -> Result<Vec<EvalFrame>> {
    frames
        .par_iter()
        .map(|f| {
            EvalFrame::new(
                f.video,
                squared_error_map(&f.sr, &f.hr)?,
                psnr_map(&f.sr, &f.hr)?,
                predict(params, &f.features)?,
            )
        })
        .collect()
}

/// Train-tagged and remaining video indices.
pub fn train_eval_videos(manifest: &DatasetManifest) -> (Vec<usize>, Vec<usize>) {
    (0..manifest.videos.len()).partition(|&v| manifest.videos[v].split == Split::Train)
}

/// Trains one network per value along `axis` and scores the non-training videos.
pub fn ablation_sweep(
    manifest: &DatasetManifest,
    axis: AblationAxis,
    values: &[usize],
    cfg: &AblationConfig,
) -> Result<Vec<AblationRow>> {
    let (train_videos, eval_videos) = train_eval_videos(manifest);
    if train_videos.is_empty() || eval_videos.is_empty() {
        return Err(Error::InvalidArgument(
            "manifest needs both train-tagged and untagged/test videos".into(),
        ));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("no ablation values".into()));
    }
    for &v in values {
        let bad = v == 0 || (axis == AblationAxis::NTrainVideos && v > train_videos.len());
        if bad {
            return Err(Error::InvalidArgument(format!(
                "{} = {v} is not valid ({} train videos available)",
                axis.name(),
                train_videos.len()
            )));
        }
    }
    let train_frames = load_frames(manifest, &train_videos, cfg.feature_mode)?;
    let eval_frames = load_frames(manifest, &eval_videos, cfg.feature_mode)?;
    let default_videos = if cfg.n_train_videos == 0 {
        train_videos.len()
    } else {
        cfg.n_train_videos.min(train_videos.len())
    };
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let (n_blocks, width, n_videos) = match axis {
            AblationAxis::NBlocks => (value, cfg.width, default_videos),
            AblationAxis::Width => (cfg.n_blocks, value, default_videos),
            AblationAxis::NTrainVideos => (cfg.n_blocks, cfg.width, value),
        };
        let keep = &train_videos[..n_videos];
        let subset: Vec<LoadedFrame> = train_frames.iter().filter(|f| keep.contains(&f.video)).cloned().collect();
        log::info!("ablation {}={value}: training on {} frames", axis.name(), subset.len());
        let (params, report) = fit(&subset, n_blocks, width, cfg.order, &cfg.train)?;
        let scored = score_frames(&params, &eval_frames)?;
        let m = detection_metrics(&scored, cfg.tau_fail, cfg.per_image)?;
        rows.push(AblationRow {
            axis: axis.name().to_string(),
            value,
            auroc: m.auroc,
            fpr95: m.fpr95,
            positive_fraction: m.positive_fraction,
            final_loss: report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(ABLATION_HEADER).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{MapUnit, ScalarMap};

    fn frame(se: &[f32], scores: &[f32]) -> EvalFrame {
        let n = se.len();
        EvalFrame::from_error(
            0,
            ScalarMap::new(1, n, MapUnit::SquaredIntensity, se.to_vec()).unwrap(),
            ScalarMap::new(1, n, MapUnit::Score, scores.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_scores_detect_perfectly() {
        // 1e-1 -> 10 dB (failure at 22), 1e-4 -> 40 dB
        let se = [1e-1, 1e-4, 1e-4, 1e-1];
        let f = frame(&se, &se);
        let m = detection_metrics(&[f], 22.0, false).unwrap();
        assert_eq!(m.auroc, 1.0);
        assert_eq!(m.fpr95, 0.0);
        assert_eq!(m.positive_fraction, 0.5);
    }

    #[test]
    fn constant_scores_give_half() {
        let se = [1e-1, 1e-4, 1e-4, 1e-1, 1e-3];
        let f = frame(&se, &[0.2; 5]);
        let m = detection_metrics(&[f], 22.0, false).unwrap();
        assert_eq!(m.auroc, 0.5);
        assert_eq!(m.fpr95, 1.0);
    }

    #[test]
    fn per_image_skips_single_class_images() {
        let a = frame(&[1e-1, 1e-4], &[1.0, 0.0]);
        let b = frame(&[1e-4, 1e-4], &[1.0, 0.0]);
        let m = detection_metrics(&[a, b], 22.0, true).unwrap();
        assert_eq!(m.auroc, 1.0);
    }

    #[test]
    fn csv_header() {
        assert!(ablation_csv(&[]).starts_with("axis,value,auroc,fpr95,positive_fraction,final_loss\n"));
    }
}
