//! Parameters, forward pass and analytic gradients of the error network.
//!
//! Pipeline: bicubic upsampling of the LR features to HR, `n_blocks` blocks of
//! `3x3 conv -> ReLU -> batch norm` (or `conv -> BN -> ReLU` when the flag is set),
//! then a `1x1` linear head to one unbounded score channel.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{self, Geometry};
use super::features::FeatureMap;
use crate::error::{Error, Result};
use crate::raster::{MapUnit, Resampler, ScalarMap, ScaleFactor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Bit 0 of the stored flags.
pub const FLAG_BN_BEFORE_RELU: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrder {
    #[default]
    ConvReluBn,
    ConvBnRelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_blocks: usize,
    pub width: usize,
    pub in_channels: usize,
    pub scale: ScaleFactor,
    #[serde(default)]
    pub order: BlockOrder,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.width == 0 || self.in_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "architecture needs positive blocks/width/channels, got {}/{}/{}",
                self.n_blocks, self.width, self.in_channels
            )));
        }
        Ok(())
    }

    pub fn flags(&self) -> u32 {
        match self.order {
            BlockOrder::ConvReluBn => 0,
            BlockOrder::ConvBnRelu => FLAG_BN_BEFORE_RELU,
        }
    }

    pub fn block_in(&self, block: usize) -> usize {
        if block == 0 {
            self.in_channels
        } else {
            self.width
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    /// `[width, in * 9]`, kernel-major within an input channel.
    pub conv_w: Vec<f32>,
    pub conv_b: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrNetParams {
    pub arch: Architecture,
    pub blocks: Vec<BlockParams>,
    pub head_w: Vec<f32>,
    pub head_b: Vec<f32>,
}

impl ErrNetParams {
    /// He-uniform convolutions, unit BN scale, zero shifts and biases.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let w = arch.width;
        let blocks = (0..arch.n_blocks)
            .map(|b| {
                let fan_in = arch.block_in(b) * 9;
                let bound = (6.0 / fan_in as f64).sqrt();
                BlockParams {
                    conv_w: (0..w * fan_in).map(|_| rng.gen_range(-bound..bound) as f32).collect(),
                    conv_b: vec![0.0; w],
                    gamma: vec![1.0; w],
                    beta: vec![0.0; w],
                    running_mean: vec![0.0; w],
                    running_var: vec![1.0; w],
                }
            })
            .collect();
        let head_bound = 1.0 / (w as f64).sqrt();
        Ok(Self {
            arch,
            blocks,
            head_w: (0..w).map(|_| rng.gen_range(-head_bound..head_bound) as f32).collect(),
            head_b: vec![0.0],
        })
    }

    /// Trainable tensors in declaration order.
    pub fn trainable(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([&b.conv_w[..], &b.conv_b[..], &b.gamma[..], &b.beta[..]]);
        }
        out.extend([&self.head_w[..], &self.head_b[..]]);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.push(&mut b.conv_w);
            out.push(&mut b.conv_b);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self
                .blocks
                .iter()
                .all(|b| b.running_mean.iter().chain(&b.running_var).all(|v| v.is_finite()))
    }

    fn check_features(&self, feats: &[&FeatureMap]) -> Result<(usize, usize)> {
        let first = feats
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty feature batch".into()))?;
        let (h, w) = (first.height(), first.width());
        for f in feats {
            if f.channels() != self.arch.in_channels {
                return Err(Error::Shape(format!(
                    "network expects {} feature channels, got {}",
                    self.arch.in_channels,
                    f.channels()
                )));
            }
            if (f.height(), f.width()) != (h, w) {
                return Err(Error::Shape("feature maps in a batch must share dims".into()));
            }
        }
        Ok((h, w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for normalization.
    Train,
    /// Running statistics for normalization.
    Eval,
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

struct BlockCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// Normalized activations before the affine transform.
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
    /// Input of the ReLU, for its mask.
    relu_in: Array2<f64>,
}

/// Batch statistics measured in a train-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub count: usize,
}

struct ForwardPass {
    out: Vec<f64>,
    caches: Vec<BlockCache>,
    last: Array2<f64>,
    stats: BatchStats,
    geometry: Geometry,
    upsampler: Resampler,
}

fn batch_norm(
    a: &Array2<f64>,
    gamma: &[f64],
    beta: &[f64],
    stats: Option<(&[f32], &[f32])>,
) -> (Array2<f64>, Array2<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = a.ncols() as f64;
    let c = a.nrows();
    let mut mean = vec![0f64; c];
    let mut var = vec![0f64; c];
    for (ci, row) in a.axis_iter(Axis(0)).enumerate() {
        match stats {
            Some((rm, rv)) => {
                mean[ci] = f64::from(rm[ci]);
                var[ci] = f64::from(rv[ci]);
            }
            None => {
                let m = row.sum() / n;
                mean[ci] = m;
                var[ci] = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            }
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = a.clone();
    for (ci, mut row) in xhat.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| (v - mean[ci]) * inv_std[ci]);
    }
    let mut y = xhat.clone();
    for (ci, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| gamma[ci] * v + beta[ci]);
    }
    (y, xhat, inv_std, mean, var)
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn run_forward(params: &ErrNetParams, feats: &[&FeatureMap], mode: Mode) -> Result<ForwardPass> {
    let (lh, lw) = params.check_features(feats)?;
    let s = params.arch.scale.get();
    let (h, w) = (lh * s, lw * s);
    let g = Geometry {
        batch: feats.len(),
        height: h,
        width: w,
    };
    let upsampler = Resampler::new(lh, lw, h, w)?;
    let mut x = Array2::<f64>::zeros((params.arch.in_channels, g.columns()));
    for (b, f) in feats.iter().enumerate() {
        for c in 0..f.channels() {
            let up = upsampler.apply(&f.plane(c));
            let base = b * g.pixels();
            for (i, v) in up.into_iter().enumerate() {
                x[[c, base + i]] = v;
            }
        }
    }

    let mut caches = Vec::with_capacity(params.blocks.len());
    let mut stats = BatchStats {
        mean: Vec::new(),
        var: Vec::new(),
        count: g.columns(),
    };
    for (bi, bp) in params.blocks.iter().enumerate() {
        let cin = params.arch.block_in(bi);
        let wmat = Array2::from_shape_vec((params.arch.width, cin * 9), to_f64(&bp.conv_w))
            .expect("weight shape follows architecture");
        let pre = conv::forward(x.view(), wmat.view(), &to_f64(&bp.conv_b), g);
        let running = match mode {
            Mode::Train => None,
            Mode::Eval => Some((&bp.running_mean[..], &bp.running_var[..])),
        };
        let gamma = to_f64(&bp.gamma);
        let beta = to_f64(&bp.beta);
        let (out, relu_in, xhat, inv_std, mean, var) = match params.arch.order {
            BlockOrder::ConvReluBn => {
                let a = relu(&pre);
                let (y, xhat, inv_std, mean, var) = batch_norm(&a, &gamma, &beta, running);
                (y, pre.clone(), xhat, inv_std, mean, var)
            }
            BlockOrder::ConvBnRelu => {
                let (a, xhat, inv_std, mean, var) = batch_norm(&pre, &gamma, &beta, running);
                (relu(&a), a, xhat, inv_std, mean, var)
            }
        };
        stats.mean.push(mean);
        stats.var.push(var);
        caches.push(BlockCache {
            input: x,
            pre,
            xhat,
            inv_std,
            relu_in,
        });
        x = out;
    }

    let hw = ndarray::Array1::from(to_f64(&params.head_w));
    let hb = f64::from(params.head_b[0]);
    let out: Vec<f64> = hw.dot(&x).iter().map(|v| v + hb).collect();
    Ok(ForwardPass {
        out,
        caches,
        last: x,
        stats,
        geometry: g,
        upsampler,
    })
}

/// Predicted error score map at HR resolution.
pub fn forward(params: &ErrNetParams, feat: &FeatureMap, mode: Mode) -> Result<ScalarMap> {
    let pass = run_forward(params, &[feat], mode)?;
    let g = pass.geometry;
    let data: Vec<f32> = pass.out.iter().map(|&v| v as f32).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    ScalarMap::new(g.height, g.width, MapUnit::Score, data)
}

/// Eval-mode forward.
pub fn predict(params: &ErrNetParams, feat: &FeatureMap) -> Result<ScalarMap> {
    forward(params, feat, Mode::Eval)
}

/// Sign pattern of every ReLU input in a train-mode pass, block by block.
///
/// Finite-difference checks use it to tell whether a perturbation crossed a kink.
pub fn relu_pattern(params: &ErrNetParams, feats: &[&FeatureMap]) -> Result<Vec<Vec<bool>>> {
    let pass = run_forward(params, feats, Mode::Train)?;
    Ok(pass
        .caches
        .iter()
        .map(|c| c.relu_in.iter().map(|&v| v > 0.0).collect())
        .collect())
}

/// Mean over pixels of `(target - prediction)^2`.
pub fn loss(pred: &ScalarMap, target_se: &ScalarMap) -> Result<f64> {
    if (pred.height(), pred.width()) != (target_se.height(), target_se.width()) {
        return Err(Error::Shape("prediction and target dims differ".into()));
    }
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target_se.data())
        .map(|(&p, &t)| (f64::from(t) - f64::from(p)).powi(2))
        .sum::<f64>()
        / n)
}

/// Gradients aligned with [`ErrNetParams::trainable`], plus the feature-input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
    /// One LR plane-major `[channel][pixel]` block per batch item.
    pub input: Vec<Vec<Vec<f64>>>,
}

pub struct LossAndGrads {
    pub loss: f64,
    pub grads: Gradients,
    pub stats: BatchStats,
}

fn bn_backward(dy: &Array2<f64>, xhat: &Array2<f64>, gamma: &[f64], inv_std: &[f64]) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let n = dy.ncols() as f64;
    let c = dy.nrows();
    let mut dx = Array2::<f64>::zeros(dy.raw_dim());
    let mut dgamma = vec![0f64; c];
    let mut dbeta = vec![0f64; c];
    for ci in 0..c {
        let dyr = dy.row(ci);
        let xr = xhat.row(ci);
        let sum_dy: f64 = dyr.sum();
        let sum_dy_x: f64 = dyr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum();
        dgamma[ci] = sum_dy_x;
        dbeta[ci] = sum_dy;
        // d xhat = dy * gamma; dx = inv_std / n * (n dxhat - sum dxhat - xhat sum(dxhat xhat))
        let k = gamma[ci] * inv_std[ci] / n;
        let mut out = dx.row_mut(ci);
        for ((o, &d), &xh) in out.iter_mut().zip(dyr.iter()).zip(xr.iter()) {
            *o = k * (n * d - sum_dy - xh * sum_dy_x);
        }
    }
    (dx, dgamma, dbeta)
}

/// Train-mode loss and analytic gradients for a batch. Does not touch running stats.
pub fn loss_and_gradients(params: &ErrNetParams, feats: &[&FeatureMap], targets: &[&ScalarMap]) -> Result<LossAndGrads> {
    if feats.len() != targets.len() {
        return Err(Error::Shape("feature and target batch sizes differ".into()));
    }
    let pass = run_forward(params, feats, Mode::Train)?;
    let g = pass.geometry;
    let mut target = Vec::with_capacity(g.columns());
    for t in targets {
        if (t.height(), t.width()) != (g.height, g.width) {
            return Err(Error::Shape(format!(
                "target {}x{} vs network output {}x{}",
                t.height(),
                t.width(),
                g.height,
                g.width
            )));
        }
        target.extend(t.data().iter().map(|&v| f64::from(v)));
    }
    let n = g.columns() as f64;
    let loss = pass
        .out
        .iter()
        .zip(&target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    let dout: Vec<f64> = pass.out.iter().zip(&target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    let dout = ndarray::Array1::from(dout);

    let head_w = to_f64(&params.head_w);
    let dhead_w: Vec<f64> = pass.last.axis_iter(Axis(0)).map(|r| r.dot(&dout)).collect();
    let dhead_b = dout.sum();
    let mut dy = Array2::<f64>::zeros(pass.last.raw_dim());
    for (ci, mut row) in dy.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&(&dout * head_w[ci]));
    }

    let mut block_grads: Vec<[Vec<f64>; 4]> = Vec::with_capacity(params.blocks.len());
    for (bi, (bp, cache)) in params.blocks.iter().zip(&pass.caches).enumerate().rev() {
        let gamma = to_f64(&bp.gamma);
        let (dpre, dgamma, dbeta) = match params.arch.order {
            BlockOrder::ConvReluBn => {
                let (da, dgamma, dbeta) = bn_backward(&dy, &cache.xhat, &gamma, &cache.inv_std);
                let dpre = ndarray::Zip::from(&da)
                    .and(&cache.relu_in)
                    .map_collect(|&d, &z| if z > 0.0 { d } else { 0.0 });
                (dpre, dgamma, dbeta)
            }
            BlockOrder::ConvBnRelu => {
                let da = ndarray::Zip::from(&dy)
                    .and(&cache.relu_in)
                    .map_collect(|&d, &a| if a > 0.0 { d } else { 0.0 });
                bn_backward(&da, &cache.xhat, &gamma, &cache.inv_std)
            }
        };
        debug_assert_eq!(dpre.dim(), cache.pre.dim());
        let cin = params.arch.block_in(bi);
        let wmat = Array2::from_shape_vec((params.arch.width, cin * 9), to_f64(&bp.conv_w))
            .expect("weight shape follows architecture");
        let cg = conv::backward(cache.input.view(), wmat.view(), dpre.view(), g);
        block_grads.push([cg.weights.into_raw_vec_and_offset().0, cg.bias, dgamma, dbeta]);
        dy = cg.input;
    }
    block_grads.reverse();

    let mut tensors: Vec<Vec<f64>> = block_grads.into_iter().flatten().collect();
    tensors.push(dhead_w);
    tensors.push(vec![dhead_b]);

    let input = input_gradient(dy.view(), g, &pass.upsampler);
    Ok(LossAndGrads {
        loss,
        grads: Gradients { tensors, input },
        stats: pass.stats,
    })
}

fn input_gradient(dx: ArrayView2<f64>, g: Geometry, up: &Resampler) -> Vec<Vec<Vec<f64>>> {
    (0..g.batch)
        .map(|b| {
            dx.axis_iter(Axis(0))
                .map(|row| {
                    let plane: Vec<f64> = row.iter().skip(b * g.pixels()).take(g.pixels()).copied().collect();
                    up.apply_adjoint(&plane)
                })
                .collect()
        })
        .collect()
}

/// Exponential moving update of the BN running statistics (unbiased variance).
pub fn update_running_stats(params: &mut ErrNetParams, stats: &BatchStats) {
    let n = stats.count as f64;
    let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
    for (bp, (mean, var)) in params.blocks.iter_mut().zip(stats.mean.iter().zip(&stats.var)) {
        for c in 0..bp.running_mean.len() {
            let rm = f64::from(bp.running_mean[c]);
            let rv = f64::from(bp.running_var[c]);
            bp.running_mean[c] = ((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * mean[c]) as f32;
            bp.running_var[c] = ((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * var[c] * unbias) as f32;
        }
    }
}
