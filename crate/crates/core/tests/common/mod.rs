//! Helpers shared by integration test targets.
#![allow(dead_code)]

use cfm::errnet::{loss_and_gradients, relu_pattern, Architecture, BlockOrder, ErrNetParams, FeatureMap};
use cfm::raster::{MapUnit, ScalarMap, ScaleFactor};
use cfm::rng::seeded;
use rand::Rng;

pub const STEP: f32 = 1e-3;
/// Fallback step for coordinates whose `STEP` perturbation crosses a ReLU kink.
pub const FINE_STEP: f32 = 1e-5;
pub const REL_TOL: f64 = 1e-3;

pub fn setup(order: BlockOrder, seed: u64) -> (ErrNetParams, FeatureMap, ScalarMap) {
    let arch = Architecture {
        n_blocks: 1,
        width: 4,
        in_channels: 3,
        scale: ScaleFactor::new(2).unwrap(),
        order,
    };
    let mut rng = seeded(seed);
    let mut params = ErrNetParams::init(arch, &mut rng).unwrap();
    // non-trivial affine and head so every tensor carries gradient
    for b in &mut params.blocks {
        for g in &mut b.gamma {
            *g = 1.0 + rng.gen_range(-0.5..0.5);
        }
        for v in b.beta.iter_mut().chain(&mut b.conv_b) {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    params.head_b = vec![0.05];
    let feats = FeatureMap::new(8, 8, 3, (0..8 * 8 * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let target = ScalarMap::new(16, 16, MapUnit::SquaredIntensity, (0..256).map(|_| rng.gen_range(0.0..0.05)).collect())
        .unwrap();
    (params, feats, target)
}

pub fn loss_at(params: &ErrNetParams, feats: &FeatureMap, target: &ScalarMap) -> f64 {
    loss_and_gradients(params, &[feats], &[target]).unwrap().loss
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-9 {
        return 0.0;
    }
    (a - n).abs() / scale
}

/// Central difference on every trainable scalar; returns the worst relative error.
pub fn worst_param_error(order: BlockOrder, seed: u64) -> (f64, usize) {
    let (params, feats, target) = setup(order, seed);
    let analytic = loss_and_gradients(&params, &[&feats], &[&target]).unwrap().grads;
    let n_tensors = params.trainable().len();
    let base_pattern = relu_pattern(&params, &[&feats]).unwrap();
    let mut worst = 0f64;
    let mut checked = 0;
    let mut kinks = 0;
    for t in 0..n_tensors {
        let len = params.trainable()[t].len();
        for i in 0..len {
            let w = params.trainable()[t][i];
            let central = |h: f32| {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.trainable_mut()[t][i] = w + h;
                minus.trainable_mut()[t][i] = w - h;
                let dw = f64::from(plus.trainable()[t][i]) - f64::from(minus.trainable()[t][i]);
                let smooth = relu_pattern(&plus, &[&feats]).unwrap() == base_pattern
                    && relu_pattern(&minus, &[&feats]).unwrap() == base_pattern;
                let numeric = (loss_at(&plus, &feats, &target) - loss_at(&minus, &feats, &target)) / dw;
                (numeric, smooth)
            };
            let (mut numeric, smooth) = central(STEP);
            if !smooth {
                kinks += 1;
                numeric = central(FINE_STEP).0;
            }
            let e = rel_err(analytic.tensors[t][i], numeric);
            worst = worst.max(e);
            checked += 1;
        }
    }
    eprintln!("{order:?}: {checked} coordinates, {kinks} crossed a ReLU kink at h={STEP}, worst rel err {worst:.2e}");
    (worst, checked)
}

