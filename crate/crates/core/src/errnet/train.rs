use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use super::model::{loss_and_gradients, update_running_stats, Architecture, ErrNetParams};
use super::optim::{cosine_lr, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::raster::ScalarMap;
use crate::rng::{derive_seed, seeded};

/// What one optimization step consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchUnit {
    /// `batch_size` images per step.
    #[default]
    Image,
    /// All frames of one video per step; `batch_size` is ignored.
    Video,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub batch_unit: BatchUnit,
    pub base_lr: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
    /// Fit `SE / r` with `r` the RMS of all training targets, then fold `r` into the
    /// head. The objective is the same up to the constant factor `r^2`; Adam's
    /// scale-free steps otherwise swamp targets of order 1e-3.
    #[serde(default = "default_true")]
    pub normalize_targets: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 1,
            batch_unit: BatchUnit::Image,
            base_lr: 1e-3,
            adam: AdamConfig::default(),
            seed: 0,
            normalize_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.base_lr)));
        }
        Ok(())
    }
}

/// One training pair: LR features and the squared-error target at HR.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: FeatureMap,
    pub target: ScalarMap,
    /// Video the frame came from, for video batching.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// One train-mode step: gradients, running-stat update and an Adam update.
/// Returns the batch loss measured before the update.
pub fn backward_step(
    params: &mut ErrNetParams,
    feats: &[&FeatureMap],
    targets: &[&ScalarMap],
    state: &mut AdamState,
    lr: f64,
) -> Result<f64> {
    let out = loss_and_gradients(params, feats, targets)?;
    if let Some((i, _)) = out
        .grads
        .tensors
        .iter()
        .enumerate()
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Numeric(format!("non-finite gradient in parameter tensor {i}")));
    }
    update_running_stats(params, &out.stats);
    state.update(params, &out.grads.tensors, lr);
    if !params.is_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok(out.loss)
}

fn batches(samples: &[TrainSample], cfg: &TrainConfig) -> Vec<Vec<usize>> {
    match cfg.batch_unit {
        BatchUnit::Image => (0..samples.len())
            .collect::<Vec<_>>()
            .chunks(cfg.batch_size)
            .map(<[usize]>::to_vec)
            .collect(),
        BatchUnit::Video => {
            let mut groups: Vec<usize> = samples.iter().map(|s| s.group).collect();
            groups.sort_unstable();
            groups.dedup();
            groups
                .into_iter()
                .map(|g| (0..samples.len()).filter(|&i| samples[i].group == g).collect())
                .collect()
        }
    }
}

/// Root mean square of every training target pixel; 1 when all targets are zero.
fn target_rms(samples: &[TrainSample]) -> f64 {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for s in samples {
        sum += s.target.data().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>();
        n += s.target.data().len();
    }
    let rms = (sum / n as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        rms
    } else {
        1.0
    }
}

/// Fits the network with Adam and a cosine learning-rate decay to zero.
///
/// Batch order is reshuffled each epoch from `derive_seed(seed, epoch + 1)`; the
/// initial weights come from `seed` directly.
pub fn train(samples: &[TrainSample], arch: Architecture, cfg: &TrainConfig) -> Result<(ErrNetParams, TrainReport)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let scale = if cfg.normalize_targets { target_rms(samples) } else { 1.0 };
    let scaled: Vec<ScalarMap>;
    let targets_all: Vec<&ScalarMap> = if scale == 1.0 {
        samples.iter().map(|s| &s.target).collect()
    } else {
        scaled = samples
            .iter()
            .map(|s| {
                let data = s.target.data().iter().map(|&v| (f64::from(v) / scale) as f32).collect();
                ScalarMap::new(s.target.height(), s.target.width(), s.target.unit(), data)
            })
            .collect::<Result<_>>()?;
        scaled.iter().collect()
    };
    let mut params = ErrNetParams::init(arch, &mut seeded(cfg.seed))?;
    let mut state = AdamState::new(&params, cfg.adam);
    let mut order = batches(samples, cfg);
    let total = cfg.epochs * order.len();
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seeded(derive_seed(cfg.seed, epoch as u64 + 1)));
        let mut sum = 0.0;
        for batch in &order {
            let feats: Vec<&FeatureMap> = batch.iter().map(|&i| &samples[i].features).collect();
            let targets: Vec<&ScalarMap> = batch.iter().map(|&i| targets_all[i]).collect();
            let lr = cosine_lr(cfg.base_lr, step, total);
            sum += backward_step(&mut params, &feats, &targets, &mut state, lr)?;
            step += 1;
        }
        let mean = sum / order.len() as f64 * scale * scale;
        log::debug!("epoch {}/{}: loss {mean:.6e}", epoch + 1, cfg.epochs);
        epoch_losses.push(mean);
    }
    for v in params.head_w.iter_mut().chain(&mut params.head_b) {
        *v = (f64::from(*v) * scale) as f32;
    }
    Ok((
        params,
        TrainReport {
            epoch_losses,
            steps: step,
        },
    ))
}
